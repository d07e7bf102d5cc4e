//! Closed-form counterfactuals under bijective generation mechanisms.
//!
//! A mechanism strictly monotone in a scalar uniform latent is identified up
//! to its direction of monotonicity by the observational quantile function:
//! `f(a, u) = F_a⁻¹(u)` (increasing) or `F_a⁻¹(1 − u)` (decreasing). The
//! counterfactual of a factual outcome `y'` under arm `a'` is then
//! `F_a⁻¹(F_{a'}(y'))` or `F_a⁻¹(1 − F_{a'}(y'))`.

use serde::{Deserialize, Serialize};

use crate::data::Distribution1D;
use crate::scm::Arm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneSign {
    Increasing,
    Decreasing,
}

impl MonotoneSign {
    pub const BOTH: [MonotoneSign; 2] = [MonotoneSign::Increasing, MonotoneSign::Decreasing];

    fn orient(self, p: f64) -> f64 {
        match self {
            MonotoneSign::Increasing => p,
            MonotoneSign::Decreasing => 1.0 - p,
        }
    }
}

/// The identified mechanism `f(a, u)`.
pub fn bgm_function<D: Distribution1D + ?Sized>(d_a: &D, u: f64, s: MonotoneSign) -> f64 {
    d_a.quantile(s.orient(u))
}

/// Counterfactual outcome in arm `a` of factual outcome `y'` observed in arm `a'`.
pub fn bgm_ecou<D: Distribution1D + ?Sized, E: Distribution1D + ?Sized>(
    d_a: &D,
    d_ap: &E,
    y_prime: f64,
    s: MonotoneSign,
) -> f64 {
    d_a.quantile(s.orient(d_ap.cdf(y_prime)))
}

/// Both BGM curves over a grid of factual outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BgmCurves {
    pub y_prime: Vec<f64>,
    pub increasing: Vec<f64>,
    pub decreasing: Vec<f64>,
}

/// `bgm_ecou` over `y_grid` for both signs, for the query `a' → a`.
pub fn bgm_curve<D: Distribution1D>(d0: &D, d1: &D, y_grid: &[f64], a_prime: Arm) -> BgmCurves {
    let (d_ap, d_a) = match a_prime {
        Arm::Control => (d0, d1),
        Arm::Treated => (d1, d0),
    };
    let curve = |s| y_grid.iter().map(|&y| bgm_ecou(d_a, d_ap, y, s)).collect();
    BgmCurves {
        y_prime: y_grid.to_vec(),
        increasing: curve(MonotoneSign::Increasing),
        decreasing: curve(MonotoneSign::Decreasing),
    }
}
