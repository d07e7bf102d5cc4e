//! Losses and the three-stage bound estimation: burn-in on both arms, then an
//! upper and a lower copy of the counterfactual arm pushed apart by the query
//! loss, the last stage additionally penalizing level-set curvature.

mod config;
pub mod losses;
mod optim;
mod train;

pub use config::{CurvatureMethod, Direction, KappaMode, Preset, TrainConfig};
pub use losses::{loss_kappa, loss_nll, loss_q, loss_w, InversionStats, KappaOptions};
pub use optim::{adam_step, ema_update, AdamState};
pub use train::{
    burn_in, train_bounds, train_bounds_observed, BoundsResult, BurnInSummary, CfQuery, Observer,
    Stage, TrajectoryPoint,
};
