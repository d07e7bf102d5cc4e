//! Small automatic-differentiation layer.
//!
//! Reverse mode ([`Tape`]/[`Var`]) drives training; second-order forward mode
//! ([`Dual2`]) gives exact gradients and Hessians of 2-input functions for the
//! curvature term. Both implement [`Real`], so model code is written once.

mod dual;
mod mlp;
mod real;
mod spectral;
mod tape;

pub use dual::Dual2;
pub use mlp::{Activation, Mlp};
pub use real::{norm_cdf, norm_logpdf, norm_ppf, sigmoid, softplus, Real};
pub use spectral::{spectral_norm, Matrix};
pub use tape::{Adjoints, Tape, Var};

pub(crate) use real::LN_SQRT_2PI;

use crate::error::{Error, Result};

/// Value and gradient of a scalar function of `params`.
///
/// The closure receives tape variables for the parameters and returns the
/// output variable. Non-differentiable points (log of a non-positive number,
/// |x| at 0, ...) are reported as [`Error::UnsupportedPrimitive`].
pub fn grad<F>(f: F, params: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = tape.vars(params);
    let out = f(&vars);
    if let Some(what) = tape.fault() {
        return Err(Error::UnsupportedPrimitive(what));
    }
    let adj = tape.adjoints(&out);
    Ok((out.value(), adj.wrt_all(&vars)))
}

/// Value, gradient and Hessian of a scalar function of a 2-vector.
pub fn hessian2<F>(f: F, u: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2])
where
    F: Fn([Dual2<f64>; 2]) -> Dual2<f64>,
{
    let out = f([Dual2::input(u[0], 0), Dual2::input(u[1], 1)]);
    (out.v, out.g, out.hessian())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_examples() {
        let (v, g) = grad(|p| p[0] * p[0], &[3.0]).unwrap();
        assert_eq!((v, g[0]), (9.0, 6.0));
        let (_, g) = grad(|p| p[0] * p[1], &[2.0, 5.0]).unwrap();
        assert_eq!(g, vec![5.0, 2.0]);
    }

    #[test]
    fn grad_reports_unsupported_points() {
        let err = grad(|p| p[0].ln(), &[-1.0]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedPrimitive(_)));
    }

    #[test]
    fn hessian_examples() {
        let (v, g, h) = hessian2(|[a, b]| a * a + b * b, [1.0, 2.0]);
        assert_eq!(v, 5.0);
        assert_eq!(g, [2.0, 4.0]);
        assert_eq!(h, [[2.0, 0.0], [0.0, 2.0]]);
        let (_, _, h) = hessian2(|[a, b]| a * b, [0.3, -0.7]);
        assert_eq!(h, [[0.0, 1.0], [1.0, 0.0]]);
    }
}
