//! Bivariate Markovian SCMs with a binary treatment and the analytic fixtures.
//!
//! An SCM here is fully described by its outcome function `f(a, u)` on the unit
//! square (`U ~ Unif[0,1]²`) and the per-arm outcome support.

use std::f64::consts::PI;
use std::fmt;

use rand::distr::Open01;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Binary treatment indicator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_index(i: u8) -> Option<Arm> {
        match i {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Smallest first latent coordinate fed to the Box-Müller map, so that
/// `f` is finite on the closed square.
pub const BOX_MULLER_FLOOR: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53

/// Step of the central finite differences used when no analytic gradient exists.
pub const FD_STEP: f64 = 1e-6;

/// Strictly monotone scalar map on [0,1] used to build `MPerp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Monotone1D {
    /// `shift + scale·u`, `scale ≠ 0`.
    Affine { scale: f64, shift: f64 },
    /// `u^exponent`, `exponent > 0`.
    Pow { exponent: f64 },
    /// `exp(rate·u)`, `rate ≠ 0`.
    Exp { rate: f64 },
}

impl Monotone1D {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Monotone1D::Affine { scale, shift } => {
                scale != 0.0 && scale.is_finite() && shift.is_finite()
            }
            Monotone1D::Pow { exponent } => exponent > 0.0 && exponent.is_finite(),
            Monotone1D::Exp { rate } => rate != 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::pre(format!("{self:?} is not strictly monotone")))
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Monotone1D::Affine { scale, shift } => shift + scale * u,
            Monotone1D::Pow { exponent } => u.max(0.0).powf(exponent),
            Monotone1D::Exp { rate } => (rate * u).exp(),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Monotone1D::Affine { scale, .. } => scale,
            Monotone1D::Pow { exponent } => exponent * u.max(0.0).powf(exponent - 1.0),
            Monotone1D::Exp { rate } => rate * (rate * u).exp(),
        }
    }

    /// `∫₀¹ g(u) du`.
    pub fn mean(&self) -> f64 {
        match *self {
            Monotone1D::Affine { scale, shift } => shift + 0.5 * scale,
            Monotone1D::Pow { exponent } => 1.0 / (exponent + 1.0),
            Monotone1D::Exp { rate } => rate.exp_m1() / rate,
        }
    }

    /// `[min g, max g]` over the unit interval.
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = (self.eval(0.0), self.eval(1.0));
        (a.min(b), a.max(b))
    }
}

/// Tags of the shipped analytic SCMs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scm", rename_all = "snake_case")]
pub enum AnalyticScmId {
    M1,
    M2,
    BoxMuller,
    MPerp {
        g1: Monotone1D,
        g2: Monotone1D,
    },
    /// Univariate triangular BGM; builds a [`TriScm`], not a [`Scm2D`].
    MTri,
    /// Stress fixture whose level sets have infinitely many components.
    OscillatingBoxMuller,
}

impl AnalyticScmId {
    /// `MPerp` with `g₁(u) = eᵘ` and `g₂(u) = 2u − 1`.
    pub fn mperp_default() -> Self {
        AnalyticScmId::MPerp {
            g1: Monotone1D::Exp { rate: 1.0 },
            g2: Monotone1D::Affine {
                scale: 2.0,
                shift: -1.0,
            },
        }
    }

    pub fn build(self) -> Result<Fixture> {
        match self {
            AnalyticScmId::MTri => Ok(Fixture::Univariate(TriScm)),
            id => Scm2D::new(id).map(Fixture::Bivariate),
        }
    }
}

/// What an [`AnalyticScmId`] constructs.
#[derive(Clone, Debug)]
pub enum Fixture {
    Bivariate(Scm2D),
    Univariate(TriScm),
}

/// A bivariate SCM: outcome function on `[0,1]²` per arm plus supports.
#[derive(Clone, Debug, PartialEq)]
pub struct Scm2D {
    id: AnalyticScmId,
    support: [(f64, f64); 2],
}

impl Scm2D {
    pub fn new(id: AnalyticScmId) -> Result<Self> {
        let bm = (-2.0 * BOX_MULLER_FLOOR.ln()).sqrt();
        let support = match id {
            AnalyticScmId::M1 | AnalyticScmId::M2 => [(-1.0, 1.0), (0.0, 2.0)],
            AnalyticScmId::BoxMuller | AnalyticScmId::OscillatingBoxMuller => {
                [(-bm, bm), (-bm, bm)]
            }
            AnalyticScmId::MPerp { g1, g2 } => {
                g1.validate()?;
                g2.validate()?;
                let (lo2, hi2) = g2.range();
                [(-hi2, -lo2), g1.range()]
            }
            AnalyticScmId::MTri => {
                return Err(Error::pre(
                    "MTri is univariate; build it with AnalyticScmId::build",
                ))
            }
        };
        Ok(Scm2D { id, support })
    }

    pub fn m1() -> Self {
        Self::new(AnalyticScmId::M1).expect("valid fixture")
    }

    pub fn m2() -> Self {
        Self::new(AnalyticScmId::M2).expect("valid fixture")
    }

    pub fn box_muller() -> Self {
        Self::new(AnalyticScmId::BoxMuller).expect("valid fixture")
    }

    pub fn mperp(g1: Monotone1D, g2: Monotone1D) -> Result<Self> {
        Self::new(AnalyticScmId::MPerp { g1, g2 })
    }

    pub fn id(&self) -> AnalyticScmId {
        self.id
    }

    /// Outcome support `[l_a, u_a]`.
    pub fn support(&self, a: Arm) -> (f64, f64) {
        self.support[a.index()]
    }

    pub fn has_analytic_grad(&self) -> bool {
        matches!(self.id, AnalyticScmId::M1 | AnalyticScmId::MPerp { .. })
    }

    /// `f(a, u)`; `u` may lie slightly outside the square (finite differences).
    pub fn eval_f(&self, a: Arm, u: [f64; 2]) -> Result<f64> {
        let [u1, u2] = u;
        Ok(match (self.id, a) {
            (AnalyticScmId::M1, Arm::Control) | (AnalyticScmId::M2, Arm::Control) => u1 + u2 - 1.0,
            (AnalyticScmId::M1, Arm::Treated) => u1 - u2 + 1.0,
            (AnalyticScmId::M2, Arm::Treated) => {
                if u1 <= u2 {
                    u1 - u2 + 1.0
                } else {
                    m2_bent_root(u1, u2)?
                }
            }
            (AnalyticScmId::BoxMuller, _) => box_muller_transform(u1, u2),
            (AnalyticScmId::OscillatingBoxMuller, _) => {
                // cos(2^{-⌈log₂ u₂⌉} π u₂): the angle sweeps [π/2, π] on every dyadic band.
                let v = u2.clamp(f64::MIN_POSITIVE, 1.0);
                let k = v.log2().ceil();
                box_muller(u1, ((-k).exp2() * PI * v).cos())
            }
            (AnalyticScmId::MPerp { g1, .. }, Arm::Treated) => g1.eval(u1),
            (AnalyticScmId::MPerp { g2, .. }, Arm::Control) => -g2.eval(u2),
            (AnalyticScmId::MTri, _) => unreachable!("Scm2D never holds MTri"),
        })
    }

    /// `∇_u f(a, u)`: analytic where registered, central differences otherwise.
    pub fn grad_f(&self, a: Arm, u: [f64; 2]) -> Result<[f64; 2]> {
        match (self.id, a) {
            (AnalyticScmId::M1, Arm::Control) => return Ok([1.0, 1.0]),
            (AnalyticScmId::M1, Arm::Treated) => return Ok([1.0, -1.0]),
            (AnalyticScmId::MPerp { g1, .. }, Arm::Treated) => {
                return Ok([g1.derivative(u[0]), 0.0])
            }
            (AnalyticScmId::MPerp { g2, .. }, Arm::Control) => {
                return Ok([0.0, -g2.derivative(u[1])])
            }
            _ => {}
        }
        let h = FD_STEP;
        let d1 = self.eval_f(a, [u[0] + h, u[1]])? - self.eval_f(a, [u[0] - h, u[1]])?;
        let d2 = self.eval_f(a, [u[0], u[1] + h])? - self.eval_f(a, [u[0], u[1] - h])?;
        Ok([d1 / (2.0 * h), d2 / (2.0 * h)])
    }

    /// `n` i.i.d. draws of `f(a, U)` with `U` uniform on the open unit square.
    pub fn sample_observational(&self, a: Arm, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::pre("sample size must be at least 1"));
        }
        let mut r = rng::stream(seed, a.index() as u64);
        (0..n)
            .map(|_| {
                let u1: f64 = r.sample(Open01);
                let u2: f64 = r.sample(Open01);
                self.eval_f(a, [u1, u2])
            })
            .collect()
    }
}

/// `√(−2 ln u₁)·cos(π u₂)`; standard normal for uniform inputs.
pub fn box_muller_transform(u1: f64, u2: f64) -> f64 {
    box_muller(u1, (PI * u2).cos())
}

fn box_muller(u1: f64, c: f64) -> f64 {
    (-2.0 * u1.clamp(BOX_MULLER_FLOOR, 1.0).ln()).sqrt() * c
}

/// Implicit family of "bent" level sets of M2 (treated arm, `u₁ > u₂`).
pub fn m2_implicit(y: f64, u1: f64, u2: f64) -> f64 {
    u1 - u2 - 8.0 * (y - 1.0).powi(2) * (1.0 - u1 - u2).abs() - 1.0
        + ((y - 2.0).powi(2) * (8.0 * (y - 1.0).powi(2) + 1.0)).sqrt()
}

/// Root in `y ∈ [1,2]` of [`m2_implicit`], by bisection to 1e-10.
fn m2_bent_root(u1: f64, u2: f64) -> Result<f64> {
    const SLACK: f64 = 1e-12;
    let (mut lo, mut hi) = (1.0, 2.0);
    if m2_implicit(lo, u1, u2) < -SLACK || m2_implicit(hi, u1, u2) > SLACK {
        return Err(Error::RootNotFound { u0: u1, u1: u2 });
    }
    // F is decreasing in y on the bracket.
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if m2_implicit(mid, u1, u2) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Univariate BGM inducing symmetric triangular distributions:
/// arm 1 on `[0,2]` (increasing in `u`), arm 0 on `[−1,1]` (decreasing in `u`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TriScm;

impl TriScm {
    pub fn eval_f(&self, a: Arm, u: f64) -> f64 {
        let rise = if u <= 0.5 {
            (2.0 * u).sqrt()
        } else {
            2.0 - (2.0 * (1.0 - u)).sqrt()
        };
        match a {
            Arm::Treated => rise,
            Arm::Control => 1.0 - rise,
        }
    }

    /// `u` with `f(a, u) = y`, clamped to `[0,1]`.
    pub fn inverse(&self, a: Arm, y: f64) -> f64 {
        let rise = match a {
            Arm::Treated => y,
            Arm::Control => 1.0 - y,
        }
        .clamp(0.0, 2.0);
        if rise <= 1.0 {
            0.5 * rise * rise
        } else {
            1.0 - 0.5 * (2.0 - rise).powi(2)
        }
    }

    pub fn support(&self, a: Arm) -> (f64, f64) {
        match a {
            Arm::Treated => (0.0, 2.0),
            Arm::Control => (-1.0, 1.0),
        }
    }

    /// Observational distribution of arm `a` (a symmetric triangular law).
    pub fn distribution(&self, a: Arm) -> Triangular {
        let (lo, hi) = self.support(a);
        Triangular { lo, hi }
    }
}

/// Symmetric triangular distribution on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangular {
    pub lo: f64,
    pub hi: f64,
}

impl Triangular {
    pub fn cdf(&self, y: f64) -> f64 {
        let w = self.hi - self.lo;
        let t = ((y - self.lo) / w).clamp(0.0, 1.0);
        if t <= 0.5 {
            2.0 * t * t
        } else {
            1.0 - 2.0 * (1.0 - t).powi(2)
        }
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let t = if q <= 0.5 {
            (0.5 * q).sqrt()
        } else {
            1.0 - (0.5 * (1.0 - q)).sqrt()
        };
        self.lo + t * (self.hi - self.lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m2_root_is_continuous_at_the_seam() {
        let m2 = Scm2D::m2();
        let below = m2.eval_f(Arm::Treated, [0.4, 0.4]).unwrap();
        let above = m2.eval_f(Arm::Treated, [0.4 + 1e-9, 0.4]).unwrap();
        assert!((below - 1.0).abs() < 1e-12);
        assert!((above - 1.0).abs() < 1e-6);
    }

    #[test]
    fn m2_corner_reaches_the_top_of_the_support() {
        let y = Scm2D::m2().eval_f(Arm::Treated, [1.0, 0.0]).unwrap();
        assert!(y > 1.99, "{y}");
    }

    #[test]
    fn tri_inverse_roundtrip() {
        for a in Arm::BOTH {
            for i in 0..=20 {
                let u = i as f64 / 20.0;
                let y = TriScm.eval_f(a, u);
                assert!((TriScm.inverse(a, y) - u).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tri_cdf_quantile_roundtrip() {
        let d = Triangular { lo: -1.0, hi: 1.0 };
        for i in 0..=20 {
            let q = i as f64 / 20.0;
            assert!((d.cdf(d.quantile(q)) - q).abs() < 1e-12);
        }
    }
}
