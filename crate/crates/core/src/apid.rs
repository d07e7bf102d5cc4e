//! Augmented pseudo-invertible decoder.
//!
//! Each arm has a residual flow `F̂_a : (0,1)² → ℝ²` whose second output is
//! the modeled mechanism `f̂_Y(a,·)` and whose first output is an auxiliary
//! coordinate. An augmentation network `g^a` lifts a scalar outcome to the
//! plane, `ŷ_aug ~ N(g^a(y), ε²)`, which makes the mechanism pseudo-invertible:
//! inverting `(ŷ_aug, y)` lands on the level set `Ê(y, a)`.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{hessian2, Activation, Dual2, Mlp, Real, LN_SQRT_2PI};
use crate::data::standard_normal;
use crate::error::{Error, Result};
use crate::flow::{Flow, FlowConfig, InverseConfig};
use crate::rng;
use crate::scm::Arm;

/// Gradients below this norm make the level-set curvature undefined.
pub const MIN_GRAD_NORM: f64 = 1e-12;

/// Checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Hyperparameters of a fresh model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApidConfig {
    pub flow: FlowConfig,
    /// Hidden width of the augmentation networks.
    pub g_hidden: usize,
    /// Augmentation variance ε².
    pub eps2: f64,
    pub inverse: InverseConfig,
}

impl Default for ApidConfig {
    fn default() -> Self {
        ApidConfig {
            flow: FlowConfig::default(),
            g_hidden: 5,
            eps2: 0.25,
            inverse: InverseConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApidModel {
    /// Flow per arm, indexed by [`Arm::index`].
    pub flows: [Flow; 2],
    /// Augmentation network per arm (1 → hidden → 1).
    pub g: [Mlp; 2],
    pub eps2: f64,
    pub inverse: InverseConfig,
}

/// Counterfactual query estimate with its Monte-Carlo ingredients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub q_hat: f64,
    pub latent_points: Vec<[f64; 2]>,
    pub pushed_outcomes: Vec<f64>,
}

/// Mean absolute curvature over level-set points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvaturePenalty {
    pub mean_abs: f64,
    pub evaluated: usize,
    /// Points dropped because the gradient vanished.
    pub skipped: usize,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: ApidModel,
}

impl ApidModel {
    /// Random normalized flows, near-zero augmentation networks.
    pub fn new<R: Rng + ?Sized>(cfg: &ApidConfig, rng: &mut R) -> Result<Self> {
        if !(cfg.eps2 > 0.0) {
            return Err(Error::pre("augmentation variance must be positive"));
        }
        let flows = [Flow::random(&cfg.flow, rng), Flow::random(&cfg.flow, rng)];
        let mk = |rng: &mut R| Mlp::random(1, cfg.g_hidden, 1, Activation::Tanh, 0.5, 0.01, rng);
        let g = [mk(rng), mk(rng)];
        Ok(ApidModel {
            flows,
            g,
            eps2: cfg.eps2,
            inverse: cfg.inverse,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps2.sqrt()
    }

    pub fn flow(&self, a: Arm) -> &Flow {
        &self.flows[a.index()]
    }

    /// Put the outcome coordinate of arm `a` at the given location/scale and
    /// the augmentation coordinate at `(0, ε)`.
    pub fn calibrate(&mut self, a: Arm, mean: f64, std: f64) {
        let eps = self.eps();
        self.flows[a.index()].calibrate([0.0, mean], [eps, std]);
    }

    /// Number of trainable parameters of arm `a` (flow, then augmentation net).
    pub fn arm_param_len(&self, a: Arm) -> usize {
        self.flows[a.index()].param_len() + self.g[a.index()].len()
    }

    pub fn arm_params(&self, a: Arm) -> Vec<f64> {
        let mut p = self.flows[a.index()].params();
        p.extend_from_slice(&self.g[a.index()].params);
        p
    }

    /// Install arm parameters and re-impose the Lipschitz bounds.
    pub fn set_arm_params(&mut self, a: Arm, p: &[f64], power_iters: usize) {
        let n = self.flows[a.index()].param_len();
        self.flows[a.index()].set_params(&p[..n]);
        self.flows[a.index()].normalize(power_iters);
        self.g[a.index()].params.copy_from_slice(&p[n..]);
    }

    /// `g^a(y)` with explicit network parameters.
    pub fn g_with<T: Real>(&self, a: Arm, p: &[T], y: T) -> T {
        self.g[a.index()].eval_with(p, &[y])[0]
    }

    pub fn g_eval(&self, a: Arm, y: f64) -> f64 {
        self.g[a.index()].eval(&[y])[0]
    }

    /// `b` pairs `(y, g^a(y) + ε ζ_j)`.
    pub fn augment(&self, a: Arm, y: f64, b: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
        if b == 0 {
            return Err(Error::pre("b must be at least 1"));
        }
        let mean = self.g_eval(a, y);
        let eps = self.eps();
        let mut r = rng::stream(seed, 0);
        Ok((0..b)
            .map(|_| (y, mean + eps * standard_normal(&mut r)))
            .collect())
    }

    /// Monte-Carlo estimate of `log P̂(Y = y | a)`:
    /// mean over augmentations of `log p̂(ŷ_aug, y) − log N(ŷ_aug; g^a(y), ε²)`.
    pub fn log_likelihood(&self, a: Arm, y: f64, b: usize, seed: u64) -> Result<f64> {
        let flow = self.flow(a);
        let mean = self.g_eval(a, y);
        let eps = self.eps();
        let mut total = 0.0;
        for (_, aug) in self.augment(a, y, b, seed)? {
            let u = flow.inverse([aug, y], &self.inverse)?;
            let (_, logdet) = flow.forward_with(&flow.params(), u);
            total += -logdet - normal_logpdf(aug, mean, eps);
        }
        Ok(total / b as f64)
    }

    /// Latent points on the estimated factual level set `Ê(y', a')`.
    pub fn abduct(&self, a_prime: Arm, y_prime: f64, b: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
        let flow = self.flow(a_prime);
        self.augment(a_prime, y_prime, b, seed)?
            .into_iter()
            .map(|(y, aug)| flow.inverse([aug, y], &self.inverse))
            .collect()
    }

    /// Abduction–action–prediction estimate of `E[Y_a | A = a', Y = y']`.
    pub fn ecou_estimate(
        &self,
        a_prime: Arm,
        y_prime: f64,
        a: Arm,
        b: usize,
        seed: u64,
    ) -> Result<QueryResult> {
        if a == a_prime {
            return Err(Error::pre(
                "counterfactual arm must differ from the factual arm",
            ));
        }
        let latent_points = self.abduct(a_prime, y_prime, b, seed)?;
        let flow = self.flow(a);
        let p = flow.params();
        let pushed_outcomes: Vec<f64> = latent_points
            .iter()
            .map(|&u| flow.forward_x_with(&p, u)[1])
            .collect();
        let q_hat = pushed_outcomes.iter().sum::<f64>() / b as f64;
        Ok(QueryResult {
            q_hat,
            latent_points,
            pushed_outcomes,
        })
    }

    /// Signed level-set curvature of `f̂_Y(a,·)` at `u`.
    pub fn curvature_at(&self, a: Arm, u: [f64; 2]) -> Result<f64> {
        let flow = self.flow(a);
        let p: Vec<Dual2<f64>> = flow.params().into_iter().map(Dual2::constant).collect();
        let (_, g, h) = hessian2(|v| flow.forward_x_with(&p, v)[1], u);
        curvature_from(g, h)
    }

    /// Mean |κ₁| over `b` points of `Ê(q̂, a)` obtained by augmenting `q̂` and inverting.
    pub fn curvature_penalty(
        &self,
        a: Arm,
        q_hat: f64,
        b: usize,
        seed: u64,
    ) -> Result<CurvaturePenalty> {
        let flow = self.flow(a);
        let points: Vec<[f64; 2]> = self
            .augment(a, q_hat, b, seed)?
            .into_iter()
            .map(|(y, aug)| flow.inverse([aug, y], &self.inverse))
            .collect::<Result<_>>()?;
        let p: Vec<Dual2<f64>> = flow.params().into_iter().map(Dual2::constant).collect();
        Ok(mean_abs_curvature(
            |v| flow.forward_x_with(&p, v)[1],
            &points,
        ))
    }

    /// `n` draws of the modeled outcome `f̂_Y(a, U)`, `U` uniform.
    pub fn sample_outcomes(&self, a: Arm, n: usize, seed: u64) -> Vec<f64> {
        let flow = self.flow(a);
        let p = flow.params();
        let mut r = rng::stream(seed, 1);
        (0..n)
            .map(|_| flow.forward_x_with(&p, [r.sample(Open01), r.sample(Open01)])[1])
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint =
            serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        Ok(c.model)
    }
}

pub(crate) fn normal_logpdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - LN_SQRT_2PI
}

/// Signed curvature of the level curve through a point, from the gradient and
/// Hessian of the function there:
/// `κ₁ = −(f_y² f_xx − 2 f_x f_y f_xy + f_x² f_yy) / ‖∇f‖³ = −∇·(∇f/‖∇f‖)`.
pub fn curvature_from<T: Real>(g: [T; 2], h: [[T; 2]; 2]) -> Result<T> {
    let n2 = g[0] * g[0] + g[1] * g[1];
    let norm = n2.value().sqrt();
    if !(norm > MIN_GRAD_NORM) {
        return Err(Error::DegenerateGradient { norm });
    }
    let num = g[1] * g[1] * h[0][0] - g[0] * g[1] * h[0][1] * 2.0 + g[0] * g[0] * h[1][1];
    Ok(-(num / (n2 * n2.sqrt())))
}

/// Mean |κ₁| of `f` over `points`, skipping points with a vanishing gradient.
pub fn mean_abs_curvature<F>(f: F, points: &[[f64; 2]]) -> CurvaturePenalty
where
    F: Fn([Dual2<f64>; 2]) -> Dual2<f64>,
{
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for &u in points {
        let (_, g, h) = hessian2(&f, u);
        match curvature_from(g, h) {
            Ok(k) => {
                sum += k.abs();
                evaluated += 1;
            }
            Err(_) => skipped += 1,
        }
    }
    CurvaturePenalty {
        mean_abs: if evaluated > 0 {
            sum / evaluated as f64
        } else {
            0.0
        },
        evaluated,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_lines_have_zero_curvature() {
        let (_, g, h) = hessian2(|[a, b]| a * 2.0 - b * 0.5, [0.3, 0.4]);
        assert_eq!(curvature_from(g, h).unwrap(), 0.0);
    }

    #[test]
    fn flat_function_is_degenerate() {
        let (_, g, h) = hessian2(|[a, _]| a.lift(1.0), [0.3, 0.4]);
        assert!(matches!(
            curvature_from(g, h),
            Err(Error::DegenerateGradient { .. })
        ));
    }
}
