use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{Real, LN_SQRT_2PI};

/// Second-order forward-mode number over two input directions.
///
/// Carries a value, its gradient with respect to `(u₁, u₂)` and the symmetric
/// Hessian stored as `[∂₁₁, ∂₁₂, ∂₂₂]`. The inner scalar `T` may itself be a
/// tape variable, which gives parameter gradients of Hessian-based quantities.
#[derive(Clone, Copy, Debug)]
pub struct Dual2<T> {
    pub v: T,
    pub g: [T; 2],
    pub h: [T; 3],
}

impl<T: Real> Dual2<T> {
    pub fn constant(v: T) -> Self {
        let z = v.lift(0.0);
        Dual2 {
            v,
            g: [z, z],
            h: [z, z, z],
        }
    }

    /// The `i`-th input coordinate seeded with a unit tangent.
    pub fn input(v: T, i: usize) -> Self {
        let mut d = Self::constant(v);
        d.g[i] = v.lift(1.0);
        d
    }

    pub fn hessian(&self) -> [[T; 2]; 2] {
        [[self.h[0], self.h[1]], [self.h[1], self.h[2]]]
    }

    /// Apply a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    fn chain(self, f0: T, f1: T, f2: T) -> Self {
        let [g0, g1] = self.g;
        let [h0, h1, h2] = self.h;
        Dual2 {
            v: f0,
            g: [f1 * g0, f1 * g1],
            h: [
                f2 * g0 * g0 + f1 * h0,
                f2 * g0 * g1 + f1 * h1,
                f2 * g1 * g1 + f1 * h2,
            ],
        }
    }
}

impl<T: Real> Add for Dual2<T> {
    type Output = Self;
    fn add(self, r: Self) -> Self {
        Dual2 {
            v: self.v + r.v,
            g: [self.g[0] + r.g[0], self.g[1] + r.g[1]],
            h: [self.h[0] + r.h[0], self.h[1] + r.h[1], self.h[2] + r.h[2]],
        }
    }
}

impl<T: Real> Sub for Dual2<T> {
    type Output = Self;
    fn sub(self, r: Self) -> Self {
        Dual2 {
            v: self.v - r.v,
            g: [self.g[0] - r.g[0], self.g[1] - r.g[1]],
            h: [self.h[0] - r.h[0], self.h[1] - r.h[1], self.h[2] - r.h[2]],
        }
    }
}

impl<T: Real> Mul for Dual2<T> {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        let (a, b) = (self, r);
        Dual2 {
            v: a.v * b.v,
            g: [a.g[0] * b.v + a.v * b.g[0], a.g[1] * b.v + a.v * b.g[1]],
            h: [
                a.h[0] * b.v + (a.g[0] * b.g[0]) * 2.0 + a.v * b.h[0],
                a.h[1] * b.v + a.g[0] * b.g[1] + a.g[1] * b.g[0] + a.v * b.h[1],
                a.h[2] * b.v + (a.g[1] * b.g[1]) * 2.0 + a.v * b.h[2],
            ],
        }
    }
}

impl<T: Real> Div for Dual2<T> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, r: Self) -> Self {
        self * r.recip()
    }
}

impl<T: Real> Neg for Dual2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual2 {
            v: -self.v,
            g: [-self.g[0], -self.g[1]],
            h: [-self.h[0], -self.h[1], -self.h[2]],
        }
    }
}

impl<T: Real> Add<f64> for Dual2<T> {
    type Output = Self;
    fn add(mut self, c: f64) -> Self {
        self.v = self.v + c;
        self
    }
}

impl<T: Real> Sub<f64> for Dual2<T> {
    type Output = Self;
    fn sub(mut self, c: f64) -> Self {
        self.v = self.v - c;
        self
    }
}

impl<T: Real> Mul<f64> for Dual2<T> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Dual2 {
            v: self.v * c,
            g: [self.g[0] * c, self.g[1] * c],
            h: [self.h[0] * c, self.h[1] * c, self.h[2] * c],
        }
    }
}

impl<T: Real> Div<f64> for Dual2<T> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self * (1.0 / c)
    }
}

impl<T: Real> Real for Dual2<T> {
    fn value(&self) -> f64 {
        self.v.value()
    }

    fn lift(&self, c: f64) -> Self {
        Self::constant(self.v.lift(c))
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    fn ln(self) -> Self {
        let r = self.v.recip();
        self.chain(self.v.ln(), r, -(r * r))
    }

    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let d1 = s.recip() * 0.5;
        let d2 = -(d1 / self.v) * 0.5;
        self.chain(s, d1, d2)
    }

    fn tanh(self) -> Self {
        let t = self.v.tanh();
        let d1 = -(t * t) + 1.0;
        let d2 = -(t * d1) * 2.0;
        self.chain(t, d1, d2)
    }

    fn abs(self) -> Self {
        let sign = if self.v.value() < 0.0 { -1.0 } else { 1.0 };
        self.chain(self.v.abs(), self.v.lift(sign), self.v.lift(0.0))
    }

    fn sigmoid(self) -> Self {
        let s = self.v.sigmoid();
        let d1 = s * (-s + 1.0);
        let d2 = d1 * (-(s * 2.0) + 1.0);
        self.chain(s, d1, d2)
    }

    fn softplus(self) -> Self {
        let s = self.v.sigmoid();
        let d2 = s * (-s + 1.0);
        self.chain(self.v.softplus(), s, d2)
    }

    fn norm_ppf(self) -> Self {
        let z = self.v.norm_ppf();
        let q = (z * z * 0.5 + LN_SQRT_2PI).exp();
        self.chain(z, q, z * q * q)
    }

    fn recip(self) -> Self {
        let r = self.v.recip();
        self.chain(r, -(r * r), r * r * r * 2.0)
    }
}
