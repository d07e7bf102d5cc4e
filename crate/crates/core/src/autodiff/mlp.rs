use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::real::Real;
use super::spectral::Matrix;

/// Hidden-layer nonlinearity. Both choices have derivative magnitude ≤ 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// `x·σ(x)/1.1`, the residual-flow activation of Chen et al.
    LipSwish,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::LipSwish => x * x.sigmoid() / 1.1,
        }
    }

    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                -(t * t) + 1.0
            }
            Activation::LipSwish => {
                let s = x.sigmoid();
                (s + x * s * (-s + 1.0)) / 1.1
            }
        }
    }

    /// Upper bound of |φ'|.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
            // max of d/dx[x σ(x)] is ≈ 1.0998
            Activation::LipSwish => 1.0,
        }
    }
}

/// Fully-connected network with one hidden layer.
///
/// Parameters are stored flat as `W1 (hidden×in), b1, W2 (out×hidden), b2`,
/// row-major, so optimizers and tapes can treat them as a single vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub n_in: usize,
    pub hidden: usize,
    pub n_out: usize,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(n_in: usize, hidden: usize, n_out: usize, activation: Activation) -> Self {
        let len = Self::param_len(n_in, hidden, n_out);
        Mlp {
            n_in,
            hidden,
            n_out,
            activation,
            params: vec![0.0; len],
        }
    }

    /// Gaussian weights with the given standard deviations, zero biases.
    pub fn random<R: Rng + ?Sized>(
        n_in: usize,
        hidden: usize,
        n_out: usize,
        activation: Activation,
        std_in: f64,
        std_out: f64,
        rng: &mut R,
    ) -> Self {
        let mut m = Self::zeros(n_in, hidden, n_out, activation);
        let (w1, _, w2, _) = m.offsets();
        for i in w1..w1 + hidden * n_in {
            m.params[i] = std_in * rng.sample::<f64, _>(StandardNormal);
        }
        for i in w2..w2 + n_out * hidden {
            m.params[i] = std_out * rng.sample::<f64, _>(StandardNormal);
        }
        m
    }

    pub fn param_len(n_in: usize, hidden: usize, n_out: usize) -> usize {
        hidden * n_in + hidden + n_out * hidden + n_out
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Offsets of (W1, b1, W2, b2) in the flat parameter vector.
    pub fn offsets(&self) -> (usize, usize, usize, usize) {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.n_in;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_out * self.hidden;
        (w1, b1, w2, b2)
    }

    pub fn w1(&self) -> Matrix {
        let (w1, b1, _, _) = self.offsets();
        Matrix::new(self.hidden, self.n_in, self.params[w1..b1].to_vec())
    }

    pub fn w2(&self) -> Matrix {
        let (_, _, w2, b2) = self.offsets();
        Matrix::new(self.n_out, self.hidden, self.params[w2..b2].to_vec())
    }

    pub fn scale_w1(&mut self, s: f64) {
        let (w1, b1, _, _) = self.offsets();
        self.params[w1..b1].iter_mut().for_each(|w| *w *= s);
    }

    pub fn scale_w2(&mut self, s: f64) {
        let (_, _, w2, b2) = self.offsets();
        self.params[w2..b2].iter_mut().for_each(|w| *w *= s);
    }

    fn pre_activations<T: Real>(&self, p: &[T], x: &[T]) -> Vec<T> {
        let (w1, b1, _, _) = self.offsets();
        (0..self.hidden)
            .map(|k| {
                let mut acc = p[b1 + k];
                for i in 0..self.n_in {
                    acc = acc + p[w1 + k * self.n_in + i] * x[i];
                }
                acc
            })
            .collect()
    }

    /// Evaluate with externally supplied parameters (e.g. tape variables).
    pub fn eval_with<T: Real>(&self, p: &[T], x: &[T]) -> Vec<T> {
        debug_assert_eq!(p.len(), self.len());
        debug_assert_eq!(x.len(), self.n_in);
        let (_, _, w2, b2) = self.offsets();
        let act: Vec<T> = self
            .pre_activations(p, x)
            .into_iter()
            .map(|h| self.activation.apply(h))
            .collect();
        (0..self.n_out)
            .map(|j| {
                let mut acc = p[b2 + j];
                for k in 0..self.hidden {
                    acc = acc + p[w2 + j * self.hidden + k] * act[k];
                }
                acc
            })
            .collect()
    }

    /// Output together with the input Jacobian `J[j][i] = ∂out_j/∂x_i`.
    pub fn eval_jac_with<T: Real>(&self, p: &[T], x: &[T]) -> (Vec<T>, Vec<Vec<T>>) {
        let (w1, _, w2, b2) = self.offsets();
        let pre = self.pre_activations(p, x);
        let act: Vec<T> = pre.iter().map(|&h| self.activation.apply(h)).collect();
        let dact: Vec<T> = pre.iter().map(|&h| self.activation.derivative(h)).collect();
        let mut out = Vec::with_capacity(self.n_out);
        let mut jac = Vec::with_capacity(self.n_out);
        for j in 0..self.n_out {
            let mut acc = p[b2 + j];
            let mut row: Vec<T> = Vec::with_capacity(self.n_in);
            for k in 0..self.hidden {
                acc = acc + p[w2 + j * self.hidden + k] * act[k];
            }
            for i in 0..self.n_in {
                let mut d = x[0].lift(0.0);
                for k in 0..self.hidden {
                    d = d + p[w2 + j * self.hidden + k] * dact[k] * p[w1 + k * self.n_in + i];
                }
                row.push(d);
            }
            out.push(acc);
            jac.push(row);
        }
        (out, jac)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval_with(&self.params, x)
    }
}
