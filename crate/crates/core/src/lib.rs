//! Partial counterfactual identification for bivariate SCMs with a binary
//! treatment and a continuous outcome.
//!
//! * [`scm`] — the SCM abstraction and analytic fixtures.
//! * [`oracle`] — level-set tracing and the line integrals giving exact
//!   observational and counterfactual quantities of a known SCM.
//! * [`data`] — datasets, empirical distributions, Wasserstein distance.
//! * [`bgm`] — closed-form counterfactuals of monotone mechanisms.
//! * [`autodiff`], [`flow`], [`apid`] — the differentiable model: residual
//!   flows with variational augmentations and level-set curvature.
//! * [`training`] — losses and the three-stage procedure producing lower and
//!   upper bounds of the expected counterfactual outcome.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apid;
pub mod autodiff;
pub mod bgm;
pub mod data;
pub mod error;
pub mod flow;
pub mod oracle;
pub mod rng;
pub mod scm;
pub mod training;

pub use apid::{ApidConfig, ApidModel, CurvaturePenalty, QueryResult};
pub use bgm::{bgm_curve, bgm_ecou, bgm_function, BgmCurves, MonotoneSign};
pub use data::{
    generate, read_csv, wasserstein1, write_csv, Dataset, DatasetSpec, DatasetTag, Distribution1D,
    EmpiricalDist,
};
pub use error::{Error, Result};
pub use flow::{normalize_lipschitz, Flow, FlowConfig, Head, InverseConfig, ResidualBlock};
pub use oracle::{
    cdf_oracle, counterfactual_density, ecou_oracle, observational_density, trace_level_set,
    LevelOracle, LevelSetPolyline, OracleConfig,
};
pub use scm::{AnalyticScmId, Arm, Monotone1D, Scm2D, TriScm};
pub use training::{train_bounds, BoundsResult, CfQuery, Direction, Preset, TrainConfig};
