//! Training losses.
//!
//! The taped builders take the trainable parameters of one arm (flow
//! parameters followed by augmentation-network parameters, see
//! [`ApidModel::arm_params`]) as tape variables; the model supplies structure
//! and the current values used by non-differentiated steps such as fixed-point
//! inversion. The public `loss_*` functions evaluate the same expressions.

use rand::distr::Open01;
use rand::Rng as _;

use crate::apid::{curvature_from, ApidModel};
use crate::autodiff::{Dual2, Real, Tape, Var, LN_SQRT_2PI};
use crate::data::{standard_normal, wasserstein1_sorted};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scm::Arm;

use super::config::{CurvatureMethod, Direction, KappaMode};

/// Inversion bookkeeping for abort decisions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InversionStats {
    pub attempts: usize,
    pub failures: usize,
}

impl InversionStats {
    pub fn add(&mut self, o: InversionStats) {
        self.attempts += o.attempts;
        self.failures += o.failures;
    }
}

/// Curvature-term options.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KappaOptions {
    pub method: CurvatureMethod,
    pub mode: KappaMode,
    pub through_points: bool,
}

/// Inverted points closer than this to the square's edge are treated as failures.
const EDGE_MARGIN: f64 = 1e-12;

/// Step of the finite-difference curvature stencil.
const KAPPA_FD_STEP: f64 = 1e-4;

fn interior(u: [f64; 2]) -> bool {
    u.iter().all(|&v| v > EDGE_MARGIN && v < 1.0 - EDGE_MARGIN)
}

fn consts<'t>(tape: &'t Tape, u: [f64; 2]) -> [Var<'t>; 2] {
    [tape.constant(u[0]), tape.constant(u[1])]
}

/// Latent point as a function of the parameters: `u(θ)` with `F(u(θ); θ) = x(θ)`.
///
/// `u*` solves the equation at the current parameters. The returned variables
/// have value exactly `u*` and the derivative `−J⁻¹ (∂F/∂θ − ∂x/∂θ)` given by
/// the implicit function theorem, where `J = ∂F/∂u` at `u*`.
fn implicit_point<'t>(
    model: &ApidModel,
    a: Arm,
    pf: &[Var<'t>],
    u: [f64; 2],
    target: [Var<'t>; 2],
) -> [Var<'t>; 2] {
    let flow = model.flow(a);
    let tape = pf[0].tape();
    let j = flow.jacobian(u);
    let fx = flow.forward_x_with(pf, consts(tape, u));
    let r0 = fx[0] - target[0];
    let r1 = fx[1] - target[1];
    // remove the (tiny) inversion residual so the value stays at u*
    let r0 = r0 - r0.value();
    let r1 = r1 - r1.value();
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let d0 = (r0 * j[1][1] - r1 * j[0][1]) / det;
    let d1 = (r1 * j[0][0] - r0 * j[1][0]) / det;
    [-d0 + u[0], -d1 + u[1]]
}

/// Mean negative log-likelihood of noisy outcomes, one augmentation draw each.
///
/// Records whose inversion fails are left out of the mean and counted in
/// `stats`. Returns `None` if every record failed.
pub fn nll_term<'t>(
    model: &ApidModel,
    a: Arm,
    p: &[Var<'t>],
    ys: &[f64],
    sigma: f64,
    r: &mut Rng,
    stats: &mut InversionStats,
) -> Option<Var<'t>> {
    let flow = model.flow(a);
    let (pf, pg) = p.split_at(flow.param_len());
    let tape = p[0].tape();
    let eps = model.eps();
    let mut acc = tape.constant(0.0);
    let mut ok = 0usize;
    for &y in ys {
        let yt = y + sigma * standard_normal(r);
        let zeta = standard_normal(r);
        let aug = model.g_with(a, pg, tape.constant(yt)) + eps * zeta;
        stats.attempts += 1;
        let u = match flow.inverse([aug.value(), yt], &model.inverse) {
            Ok(u) if interior(u) => u,
            _ => {
                stats.failures += 1;
                continue;
            }
        };
        let us = implicit_point(model, a, pf, u, [aug, tape.constant(yt)]);
        let (_, logdet) = flow.forward_with(pf, us);
        // −log p̂(aug, y) = logdet;  log N(aug; g(y), ε²) = −ζ²/2 − ln ε − ln √(2π)
        let log_q = -0.5 * zeta * zeta - eps.ln() - LN_SQRT_2PI;
        acc = acc + logdet + log_q;
        ok += 1;
    }
    (ok > 0).then(|| acc / ok as f64)
}

/// Wasserstein-1 distance between `b` modeled outcomes and the batch.
pub fn w_term<'t>(
    model: &ApidModel,
    a: Arm,
    p: &[Var<'t>],
    ys: &[f64],
    b: usize,
    r: &mut Rng,
) -> Var<'t> {
    let flow = model.flow(a);
    let pf = &p[..flow.param_len()];
    let tape = p[0].tape();
    let mut outs: Vec<Var<'t>> = (0..b)
        .map(|_| {
            let u = [r.sample(Open01), r.sample(Open01)];
            flow.forward_x_with(pf, consts(tape, u))[1]
        })
        .collect();
    outs.sort_by(|x, y| x.value().total_cmp(&y.value()));
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    wasserstein1_sorted(&outs, &sorted)
}

/// `Q̂` as a function of the counterfactual flow's parameters.
///
/// Abduction runs through the factual arm of `model` with plain floats, so no
/// gradient reaches the factual flow or its augmentation network.
#[allow(clippy::too_many_arguments)]
pub fn q_term<'t>(
    model: &ApidModel,
    a_prime: Arm,
    y_prime: f64,
    a: Arm,
    p: &[Var<'t>],
    b: usize,
    r: &mut Rng,
    stats: &mut InversionStats,
) -> Option<Var<'t>> {
    let flow = model.flow(a);
    let pf = &p[..flow.param_len()];
    let tape = p[0].tape();
    let factual = model.flow(a_prime);
    let mean = model.g_eval(a_prime, y_prime);
    let eps = model.eps();
    let mut acc = tape.constant(0.0);
    let mut ok = 0usize;
    for _ in 0..b {
        let aug = mean + eps * standard_normal(r);
        stats.attempts += 1;
        match factual.inverse([aug, y_prime], &model.inverse) {
            Ok(u) => {
                acc = acc + flow.forward_x_with(pf, consts(tape, u))[1];
                ok += 1;
            }
            Err(_) => stats.failures += 1,
        }
    }
    (ok > 0).then(|| acc / ok as f64)
}

/// `Softplus(∓Q̂)`.
pub fn q_loss<T: Real>(q_hat: T, dir: Direction) -> T {
    (q_hat * dir.sign()).softplus()
}

/// Mean (absolute) curvature of `f̂_Y(a,·)` on `b` points of `Ê(q̂, a)`.
///
/// Returns the term and the number of points skipped for a vanishing gradient;
/// `None` if no point could be evaluated.
#[allow(clippy::too_many_arguments)]
pub fn kappa_term<'t>(
    model: &ApidModel,
    a: Arm,
    p: &[Var<'t>],
    q_hat: f64,
    b: usize,
    opts: &KappaOptions,
    r: &mut Rng,
    stats: &mut InversionStats,
) -> (Option<Var<'t>>, usize) {
    let flow = model.flow(a);
    let (pf, pg) = p.split_at(flow.param_len());
    let tape = p[0].tape();
    let eps = model.eps();
    let mean = model.g_eval(a, q_hat);
    let pd: Vec<Dual2<Var<'t>>> = match opts.method {
        CurvatureMethod::Exact => pf.iter().map(|&v| Dual2::constant(v)).collect(),
        CurvatureMethod::FiniteDifference => Vec::new(),
    };
    let mut acc = tape.constant(0.0);
    let mut ok = 0usize;
    let mut skipped = 0usize;
    for _ in 0..b {
        let zeta = standard_normal(r);
        stats.attempts += 1;
        let u = match flow.inverse([mean + eps * zeta, q_hat], &model.inverse) {
            Ok(u) if interior(u) => u,
            _ => {
                stats.failures += 1;
                continue;
            }
        };
        let point = if opts.through_points {
            let aug = model.g_with(a, pg, tape.constant(q_hat)) + eps * zeta;
            implicit_point(model, a, pf, u, [aug, tape.constant(q_hat)])
        } else {
            consts(tape, u)
        };
        let kappa = match opts.method {
            CurvatureMethod::Exact => {
                let out = flow
                    .forward_x_with(&pd, [Dual2::input(point[0], 0), Dual2::input(point[1], 1)])[1];
                curvature_from(out.g, out.hessian())
            }
            CurvatureMethod::FiniteDifference => {
                fd_curvature(|v| flow.forward_x_with(pf, v)[1], point)
            }
        };
        let Ok(kappa) = kappa else {
            skipped += 1;
            continue;
        };
        let term = match opts.mode {
            KappaMode::Abs if kappa.value() < 0.0 => -kappa,
            _ => kappa,
        };
        acc = acc + term;
        ok += 1;
    }
    ((ok > 0).then(|| acc / ok as f64), skipped)
}

/// Curvature from a 9-point central-difference stencil of `f` around `u`.
fn fd_curvature<T: Real, F: Fn([T; 2]) -> T>(f: F, u: [T; 2]) -> Result<T> {
    let h = KAPPA_FD_STEP;
    // keep the stencil inside the open square
    let c = [
        u[0] - (u[0].value() - u[0].value().clamp(2.0 * h, 1.0 - 2.0 * h)),
        u[1] - (u[1].value() - u[1].value().clamp(2.0 * h, 1.0 - 2.0 * h)),
    ];
    let at = |dx: f64, dy: f64| f([c[0] + dx, c[1] + dy]);
    let f0 = at(0.0, 0.0);
    let (fxp, fxm, fyp, fym) = (at(h, 0.0), at(-h, 0.0), at(0.0, h), at(0.0, -h));
    let (fpp, fpm, fmp, fmm) = (at(h, h), at(h, -h), at(-h, h), at(-h, -h));
    let g = [(fxp - fxm) / (2.0 * h), (fyp - fym) / (2.0 * h)];
    let hxx = (fxp - f0 * 2.0 + fxm) / (h * h);
    let hyy = (fyp - f0 * 2.0 + fym) / (h * h);
    let hxy = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    curvature_from(g, [[hxx, hxy], [hxy, hyy]])
}

/// Value of a taped loss, failing on non-differentiable points.
fn value_of(tape: &Tape, v: Option<Var<'_>>) -> Result<f64> {
    if let Some(what) = tape.fault() {
        return Err(Error::UnsupportedPrimitive(what));
    }
    v.map(|v| v.value()).ok_or(Error::NoConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    })
}

/// Negative log-likelihood of `batch` (outcomes of arm `a`) with noise variance `sigma2`.
pub fn loss_nll(model: &ApidModel, a: Arm, batch: &[f64], sigma2: f64, seed: u64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::pre("batch must be nonempty"));
    }
    let tape = Tape::new();
    let p = tape.vars(&model.arm_params(a));
    let mut stats = InversionStats::default();
    let v = nll_term(
        model,
        a,
        &p,
        batch,
        sigma2.sqrt(),
        &mut rng::stream(seed, 0),
        &mut stats,
    );
    if stats.failures > 0 {
        return Err(Error::NoConvergence {
            iterations: model.inverse.max_iter,
            residual: f64::NAN,
        });
    }
    value_of(&tape, v)
}

/// Wasserstein-1 distance between `b` model samples of arm `a` and `batch`.
pub fn loss_w(model: &ApidModel, a: Arm, batch: &[f64], b: usize, seed: u64) -> Result<f64> {
    if batch.is_empty() || b == 0 {
        return Err(Error::pre("batch and b must be nonempty"));
    }
    let tape = Tape::new();
    let p = tape.vars(&model.arm_params(a));
    let v = w_term(model, a, &p, batch, b, &mut rng::stream(seed, 0));
    value_of(&tape, Some(v))
}

/// `Softplus(∓Q̂)` with `Q̂` estimated from `b` abducted points.
pub fn loss_q(
    model: &ApidModel,
    a_prime: Arm,
    y_prime: f64,
    a: Arm,
    dir: Direction,
    b: usize,
    seed: u64,
) -> Result<f64> {
    let q = model.ecou_estimate(a_prime, y_prime, a, b, seed)?;
    Ok(q_loss(q.q_hat, dir))
}

/// Curvature penalty on `Ê(q̂, a)`; delegates to [`ApidModel::curvature_penalty`].
pub fn loss_kappa(model: &ApidModel, a: Arm, q_hat: f64, b: usize, seed: u64) -> Result<f64> {
    Ok(model.curvature_penalty(a, q_hat, b, seed)?.mean_abs)
}
