use std::ops::{Add, Div, Mul, Neg, Sub};

use statrs::function::erf;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Scalar abstraction shared by plain evaluation, tape variables and dual numbers.
///
/// Model code (flows, MLPs, curvature) is written once against this trait and
/// instantiated with `f64`, [`Var`](super::Var), [`Dual2<f64>`](super::Dual2)
/// or `Dual2<Var>`.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;

    /// A constant living in the same context as `self` (same tape, same dual space).
    fn lift(&self, c: f64) -> Self;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    /// Standard normal quantile function.
    fn norm_ppf(self) -> Self;

    fn recip(self) -> Self {
        self.lift(1.0) / self
    }

    fn square(self) -> Self {
        self * self
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn norm_ppf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p)
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn norm_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

impl Real for f64 {
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    fn softplus(self) -> Self {
        softplus(self)
    }
    fn norm_ppf(self) -> Self {
        norm_ppf(self)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
}
