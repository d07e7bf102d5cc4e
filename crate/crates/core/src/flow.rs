//! Invertible residual flow from the open unit square to the plane.
//!
//! `F = affine ∘ block_t ∘ … ∘ block_1 ∘ head`, where the head maps `(0,1)²`
//! onto `ℝ²` coordinatewise, each block is `x ↦ x + g(x)` with `Lip(g) < 1`,
//! and the affine map is a diagonal scale plus shift. The first output
//! coordinate is the augmentation, the second the outcome.
//!
//! All stages have closed-form 2×2 Jacobians, so the log-determinant is exact.
//! Forward evaluation is generic over [`Real`] so the same code runs on plain
//! floats, tape variables and second-order duals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    norm_cdf, sigmoid, spectral_norm, Activation, Dual2, Mlp, Real, LN_SQRT_2PI,
};
use crate::error::{Error, Result};

/// Coordinatewise bijection `(0,1) → ℝ` applied first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// `logit(u) = ln u − ln(1−u)`; pushes the uniform base to a standard logistic.
    #[default]
    Logit,
    /// `Φ⁻¹(u)`; pushes the uniform base to a standard normal.
    Probit,
}

impl Head {
    pub fn apply<T: Real>(self, u: T) -> T {
        match self {
            Head::Logit => u.ln() - (-u + 1.0).ln(),
            Head::Probit => u.norm_ppf(),
        }
    }

    /// `ln |d head / du|` given `u` and `z = head(u)`.
    pub fn log_derivative<T: Real>(self, u: T, z: T) -> T {
        match self {
            Head::Logit => -(u.ln() + (-u + 1.0).ln()),
            Head::Probit => z * z * 0.5 + LN_SQRT_2PI,
        }
    }

    pub fn invert(self, z: f64) -> f64 {
        match self {
            Head::Logit => sigmoid(z),
            Head::Probit => norm_cdf(z),
        }
    }

    /// Standard deviation of the head's pushforward of `Unif(0,1)`.
    pub fn base_std(self) -> f64 {
        match self {
            Head::Logit => std::f64::consts::PI / 3f64.sqrt(),
            Head::Probit => 1.0,
        }
    }
}

/// Fixed-point inversion controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    pub atol: f64,
    pub rtol: f64,
    pub max_iter: usize,
    /// Newton steps with the exact block Jacobian after the fixed point has converged.
    pub newton_steps: usize,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            atol: 1e-4,
            rtol: 1e-4,
            max_iter: 200,
            newton_steps: 2,
        }
    }
}

/// Residual map `x ↦ x + g(x)` with a 2→h→2 network `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub net: Mlp,
    /// Bound `c < 1` on `Lip(g)` enforced by [`normalize_lipschitz`].
    pub lipschitz_target: f64,
    /// Spectral norms of `W1`, `W2` measured at the last normalization.
    pub spectral_norms: [f64; 2],
}

impl ResidualBlock {
    pub fn zeros(hidden: usize, activation: Activation, lipschitz_target: f64) -> Self {
        ResidualBlock {
            net: Mlp::zeros(2, hidden, 2, activation),
            lipschitz_target,
            spectral_norms: [0.0, 0.0],
        }
    }

    pub fn param_len(&self) -> usize {
        self.net.len()
    }

    pub fn apply<T: Real>(&self, p: &[T], x: [T; 2]) -> [T; 2] {
        let g = self.net.eval_with(p, &x);
        [x[0] + g[0], x[1] + g[1]]
    }

    /// Output and Jacobian `I + ∂g/∂x`.
    pub fn apply_jac<T: Real>(&self, p: &[T], x: [T; 2]) -> ([T; 2], [[T; 2]; 2]) {
        let (g, j) = self.net.eval_jac_with(p, &x);
        (
            [x[0] + g[0], x[1] + g[1]],
            [[j[0][0] + 1.0, j[0][1]], [j[1][0], j[1][1] + 1.0]],
        )
    }

    /// Solve `v + g(v) = z` by Banach iteration `v ← z − g(v)` from `v = z`,
    /// then polish with Newton steps.
    pub fn invert(&self, z: [f64; 2], cfg: &InverseConfig) -> Result<[f64; 2]> {
        let p = &self.net.params;
        let mut v = z;
        let mut converged = false;
        let mut resid = f64::INFINITY;
        for _ in 0..cfg.max_iter {
            let g = self.net.eval(&v);
            let next = [z[0] - g[0], z[1] - g[1]];
            let ok = (0..2).all(|i| (next[i] - v[i]).abs() <= cfg.atol + cfg.rtol * next[i].abs());
            resid = (next[0] - v[0]).abs().max((next[1] - v[1]).abs());
            v = next;
            if !v[0].is_finite() || !v[1].is_finite() {
                break;
            }
            if ok {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                iterations: cfg.max_iter,
                residual: resid,
            });
        }
        for _ in 0..cfg.newton_steps {
            let (out, j) = self.apply_jac(p, v);
            let r = [out[0] - z[0], out[1] - z[1]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            v[0] -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            v[1] -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        }
        Ok(v)
    }
}

/// Rescale `W1` and `W2` so each has spectral norm at most `√c`, which bounds
/// `Lip(g) ≤ ‖W2‖·Lip(φ)·‖W1‖ ≤ c`.
pub fn normalize_lipschitz(block: &mut ResidualBlock, power_iters: usize) {
    let budget = block.lipschitz_target.sqrt() / block.net.activation.lipschitz().sqrt();
    let s1 = spectral_norm(&block.net.w1(), power_iters);
    let s2 = spectral_norm(&block.net.w2(), power_iters);
    let mut out = [s1, s2];
    if s1 > budget {
        block.net.scale_w1(budget / s1);
        out[0] = budget;
    }
    if s2 > budget {
        block.net.scale_w2(budget / s2);
        out[1] = budget;
    }
    block.spectral_norms = out;
}

/// Architecture of a [`Flow`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub n_blocks: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub head: Head,
    pub lipschitz_target: f64,
    /// Standard deviation of the initial first-layer weights.
    pub init_w1_std: f64,
    /// Standard deviation of the initial second-layer weights.
    pub init_w2_std: f64,
    pub power_iters: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            n_blocks: 15,
            hidden: 5,
            activation: Activation::Tanh,
            head: Head::Logit,
            lipschitz_target: 0.97,
            init_w1_std: 0.5,
            init_w2_std: 0.01,
            power_iters: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub head: Head,
    pub blocks: Vec<ResidualBlock>,
    /// Diagonal of the output affine map (may be negative).
    pub scale: [f64; 2],
    pub shift: [f64; 2],
}

fn check_unit(u: [f64; 2]) -> Result<()> {
    if u.iter().all(|&v| v > 0.0 && v < 1.0) {
        Ok(())
    } else {
        Err(Error::pre(format!(
            "flow input ({}, {}) is not inside the open unit square",
            u[0], u[1]
        )))
    }
}

impl Flow {
    /// Blocks with zero weights and identity affine: `F = head`.
    pub fn identity(cfg: &FlowConfig) -> Self {
        Flow {
            head: cfg.head,
            blocks: (0..cfg.n_blocks)
                .map(|_| ResidualBlock::zeros(cfg.hidden, cfg.activation, cfg.lipschitz_target))
                .collect(),
            scale: [1.0, 1.0],
            shift: [0.0, 0.0],
        }
    }

    /// Random normalized blocks and identity affine.
    pub fn random<R: Rng + ?Sized>(cfg: &FlowConfig, rng: &mut R) -> Self {
        let mut f = Self::identity(cfg);
        for b in &mut f.blocks {
            b.net = Mlp::random(
                2,
                cfg.hidden,
                2,
                cfg.activation,
                cfg.init_w1_std,
                cfg.init_w2_std,
                rng,
            );
            normalize_lipschitz(b, cfg.power_iters);
        }
        f
    }

    /// Set the affine map so that the head's base law lands at the given
    /// per-coordinate means and standard deviations.
    pub fn calibrate(&mut self, mean: [f64; 2], std: [f64; 2]) {
        let s = self.head.base_std();
        self.scale = [std[0] / s, std[1] / s];
        self.shift = mean;
    }

    pub fn param_len(&self) -> usize {
        self.blocks.iter().map(|b| b.param_len()).sum::<usize>() + 4
    }

    /// Flat parameters: every block's network, then `scale`, then `shift`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_len());
        for b in &self.blocks {
            p.extend_from_slice(&b.net.params);
        }
        p.extend_from_slice(&self.scale);
        p.extend_from_slice(&self.shift);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_len(), "flow parameter length mismatch");
        let mut o = 0;
        for b in &mut self.blocks {
            let n = b.param_len();
            b.net.params.copy_from_slice(&p[o..o + n]);
            o += n;
        }
        self.scale = [p[o], p[o + 1]];
        self.shift = [p[o + 2], p[o + 3]];
    }

    /// Re-impose every block's Lipschitz bound.
    pub fn normalize(&mut self, power_iters: usize) {
        for b in &mut self.blocks {
            normalize_lipschitz(b, power_iters);
        }
    }

    /// `F(u)` with externally supplied parameters (layout of [`Flow::params`]).
    pub fn forward_x_with<T: Real>(&self, p: &[T], u: [T; 2]) -> [T; 2] {
        let mut x = [self.head.apply(u[0]), self.head.apply(u[1])];
        let mut o = 0;
        for b in &self.blocks {
            let n = b.param_len();
            x = b.apply(&p[o..o + n], x);
            o += n;
        }
        [x[0] * p[o] + p[o + 2], x[1] * p[o + 1] + p[o + 3]]
    }

    /// `(F(u), ln |det ∂F/∂u|)` with externally supplied parameters.
    pub fn forward_with<T: Real>(&self, p: &[T], u: [T; 2]) -> ([T; 2], T) {
        let z = [self.head.apply(u[0]), self.head.apply(u[1])];
        let mut logdet =
            self.head.log_derivative(u[0], z[0]) + self.head.log_derivative(u[1], z[1]);
        let mut x = z;
        let mut o = 0;
        for b in &self.blocks {
            let n = b.param_len();
            let (next, j) = b.apply_jac(&p[o..o + n], x);
            logdet = logdet + (j[0][0] * j[1][1] - j[0][1] * j[1][0]).ln();
            x = next;
            o += n;
        }
        logdet = logdet + p[o].abs().ln() + p[o + 1].abs().ln();
        ([x[0] * p[o] + p[o + 2], x[1] * p[o + 1] + p[o + 3]], logdet)
    }

    pub fn forward(&self, u: [f64; 2]) -> Result<([f64; 2], f64)> {
        check_unit(u)?;
        Ok(self.forward_with(&self.params(), u))
    }

    /// Outcome coordinate `f̂_Y(u)` (second output).
    pub fn outcome(&self, u: [f64; 2]) -> Result<f64> {
        check_unit(u)?;
        Ok(self.forward_x_with(&self.params(), u)[1])
    }

    /// Jacobian `J[i][k] = ∂F_i/∂u_k` at `u`.
    pub fn jacobian(&self, u: [f64; 2]) -> [[f64; 2]; 2] {
        let p: Vec<Dual2<f64>> = self.params().into_iter().map(Dual2::constant).collect();
        let x = self.forward_x_with(&p, [Dual2::input(u[0], 0), Dual2::input(u[1], 1)]);
        [x[0].g, x[1].g]
    }

    /// `F⁻¹(x)`: invert the affine map, the blocks in reverse order, then the head.
    ///
    /// The result is clamped into the open unit square so that saturated heads
    /// still yield valid flow inputs.
    pub fn inverse(&self, x: [f64; 2], cfg: &InverseConfig) -> Result<[f64; 2]> {
        let mut z = [
            (x[0] - self.shift[0]) / self.scale[0],
            (x[1] - self.shift[1]) / self.scale[1],
        ];
        for b in self.blocks.iter().rev() {
            z = b.invert(z, cfg)?;
        }
        const EDGE: f64 = 1e-15;
        Ok(z.map(|v| self.head.invert(v).clamp(EDGE, 1.0 - EDGE)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("flow serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
