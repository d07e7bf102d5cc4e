use serde::{Deserialize, Serialize};

use crate::apid::ApidConfig;
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, InverseConfig};

/// Named hyperparameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// The published settings.
    Paper,
    /// A shorter curvature-query stage and a smaller batch for quick runs and CI.
    Desk,
}

/// Which bound a model copy pushes toward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upper,
    Lower,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Upper, Direction::Lower];

    /// Sign `s` in `Softplus(s·Q̂)`: maximizing uses `−Q̂`.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Upper => -1.0,
            Direction::Lower => 1.0,
        }
    }
}

/// How parameter gradients of the curvature are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureMethod {
    /// Second-order duals over tape variables: exact third-order propagation.
    #[default]
    Exact,
    /// Central-difference gradient and Hessian of taped function values.
    FiniteDifference,
}

/// Whether the curvature penalty uses |κ₁| or κ₁.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    #[default]
    Abs,
    Signed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Minibatch size; also the number of Monte-Carlo draws in every loss.
    pub batch: usize,
    pub n_burnin: usize,
    pub n_query: usize,
    pub n_curv_query: usize,
    /// Augmentation variance ε².
    pub eps2: f64,
    /// Variance of the noise added to outcomes in the likelihood loss.
    pub sigma2_noise: f64,
    pub ema_gamma: f64,
    /// Hand the EMA-smoothed burn-in parameters (rather than the last iterate)
    /// to the query stages.
    pub ema_burn_in: bool,
    /// Restart Adam's moment estimates when the curvature loss is switched on.
    pub adam_restart_on_curvature: bool,
    pub lambda_q: f64,
    pub lambda_kappa: f64,
    pub seed: u64,
    pub inverse: InverseConfig,
    pub flow: FlowConfig,
    pub g_hidden: usize,
    pub curvature: CurvatureMethod,
    pub kappa_mode: KappaMode,
    /// Let curvature gradients flow through the positions of the level-set
    /// points (via the implicit function theorem). Off by default.
    pub grad_through_level_points: bool,
    /// Draws used to evaluate the final bounds.
    pub eval_batch: usize,
    /// Abort when more than `abort_fraction` of inversions fail within any
    /// window of this many iterations.
    pub abort_window: usize,
    pub abort_fraction: f64,
}

impl TrainConfig {
    pub fn preset(p: Preset) -> Self {
        let paper = TrainConfig {
            lr: 0.01,
            batch: 32,
            n_burnin: 500,
            n_query: 100,
            n_curv_query: 500,
            eps2: 0.25,
            sigma2_noise: 1e-6,
            ema_gamma: 0.99,
            ema_burn_in: true,
            adam_restart_on_curvature: true,
            lambda_q: 2.0,
            lambda_kappa: 1.0,
            seed: 0,
            inverse: InverseConfig::default(),
            flow: FlowConfig::default(),
            g_hidden: 5,
            curvature: CurvatureMethod::Exact,
            kappa_mode: KappaMode::Abs,
            grad_through_level_points: false,
            eval_batch: 1024,
            abort_window: 50,
            abort_fraction: 0.5,
        };
        match p {
            Preset::Paper => paper,
            Preset::Desk => TrainConfig {
                batch: 16,
                n_curv_query: 100,
                ..paper
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.batch,
            self.n_burnin,
            self.eval_batch,
            self.abort_window,
        ];
        if counts.contains(&0) {
            return Err(Error::pre(
                "batch, n_burnin, eval_batch and abort_window must be positive",
            ));
        }
        if !(self.lr > 0.0 && self.eps2 > 0.0 && self.sigma2_noise >= 0.0) {
            return Err(Error::pre(
                "lr and eps2 must be positive, sigma2_noise nonnegative",
            ));
        }
        if !(0.0..=1.0).contains(&self.ema_gamma) {
            return Err(Error::pre("ema_gamma must lie in [0, 1]"));
        }
        if !(self.lambda_q >= 0.0 && self.lambda_kappa >= 0.0) {
            return Err(Error::pre("loss coefficients must be nonnegative"));
        }
        if !(self.flow.lipschitz_target > 0.0 && self.flow.lipschitz_target < 1.0) {
            return Err(Error::pre("flow Lipschitz target must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn apid(&self) -> ApidConfig {
        ApidConfig {
            flow: self.flow,
            g_hidden: self.g_hidden,
            eps2: self.eps2,
            inverse: self.inverse,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}
