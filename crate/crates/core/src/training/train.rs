use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::apid::ApidModel;
use crate::autodiff::{Real, Tape, Var};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scm::Arm;

use super::config::{Direction, TrainConfig};
use super::losses::{kappa_term, nll_term, q_loss, q_term, w_term, InversionStats, KappaOptions};
use super::optim::{adam_step, ema_update, AdamState};

/// Counterfactual query `E[Y_a | A = a', Y = y']`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfQuery {
    pub a_prime: Arm,
    pub y_prime: f64,
    pub a: Arm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    BurnIn,
    Query,
    CurvatureQuery,
}

/// One optimizer step as logged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub stage: Stage,
    /// Iteration counter within the burn-in, or across query and curvature-query stages.
    pub iteration: usize,
    pub arm: Arm,
    pub direction: Option<Direction>,
    pub loss_nll: Option<f64>,
    pub loss_w: f64,
    pub q_hat: Option<f64>,
    pub loss_q: Option<f64>,
    /// Whether the query loss entered this step's objective.
    pub q_applied: bool,
    pub kappa: Option<f64>,
    pub inversion_attempts: usize,
    pub inversion_failures: usize,
    /// False when the step was dropped for a non-finite or undefined gradient.
    pub updated: bool,
}

/// Per-arm fit at the end of the burn-in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurnInSummary {
    pub arm: Arm,
    pub loss_nll: Option<f64>,
    pub loss_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsResult {
    pub query: CfQuery,
    pub lower: f64,
    pub upper: f64,
    /// Sample minimum and maximum of the counterfactual arm's outcomes.
    pub support_estimate: [f64; 2],
    /// Estimate of the burned-in model before the bound copies diverge.
    pub burn_in_q_hat: f64,
    pub burn_in: Vec<BurnInSummary>,
    pub burn_in_trajectory: Vec<TrajectoryPoint>,
    pub upper_trajectory: Vec<TrajectoryPoint>,
    pub lower_trajectory: Vec<TrajectoryPoint>,
    /// EMA-smoothed model of the upper bound.
    pub upper_model: ApidModel,
    /// EMA-smoothed model of the lower bound.
    pub lower_model: ApidModel,
    pub config: TrainConfig,
}

/// Receives every trajectory point as it is produced, possibly from several threads.
pub type Observer<'a> = &'a (dyn Fn(&TrajectoryPoint) + Sync);

/// Salts separating the random streams of the training phases.
const SALT_BURN_IN: u64 = 0x4255_524e;
const SALT_UPPER: u64 = 0x5550_5052;
const SALT_LOWER: u64 = 0x4c4f_5752;
const SALT_EVAL: u64 = 0x4556_414c;
const SALT_INIT: u64 = 0x494e_4954;

/// Rolling inversion-failure check over a window of iterations.
struct AbortMonitor {
    window: usize,
    fraction: f64,
    history: VecDeque<InversionStats>,
    total: InversionStats,
}

impl AbortMonitor {
    fn new(cfg: &TrainConfig) -> Self {
        AbortMonitor {
            window: cfg.abort_window,
            fraction: cfg.abort_fraction,
            history: VecDeque::new(),
            total: InversionStats::default(),
        }
    }

    fn record(&mut self, s: InversionStats, what: &str, iteration: usize) -> Result<()> {
        self.history.push_back(s);
        self.total.add(s);
        if self.history.len() > self.window {
            let old = self.history.pop_front().expect("nonempty window");
            self.total.attempts -= old.attempts;
            self.total.failures -= old.failures;
        }
        let t = self.total;
        if t.attempts > 0 && t.failures as f64 > self.fraction * t.attempts as f64 {
            return Err(Error::TrainingAborted(format!(
                "{what}, iteration {iteration}: {} of {} inversions failed in the last {} iterations",
                t.failures,
                t.attempts,
                self.history.len()
            )));
        }
        Ok(())
    }
}

fn sample_batch(ys: &[f64], b: usize, r: &mut Rng) -> Vec<f64> {
    (0..b).map(|_| ys[r.random_range(0..ys.len())]).collect()
}

/// Gradient of a taped objective, or `None` if it is undefined or not finite.
fn gradient<'t>(tape: &'t Tape, loss: Var<'t>, p: &[Var<'t>]) -> Option<Vec<f64>> {
    if tape.fault().is_some() || !loss.value().is_finite() {
        return None;
    }
    let g = tape.adjoints(&loss).wrt_all(p);
    g.iter().all(|v| v.is_finite()).then_some(g)
}

fn validate_data(dataset: &Dataset, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    for a in Arm::BOTH {
        if dataset.count(a) < 2 {
            return Err(Error::pre(format!("arm {a} needs at least two records")));
        }
    }
    Ok(())
}

fn burn_in_arm(
    model: &mut ApidModel,
    a: Arm,
    ys: &[f64],
    cfg: &TrainConfig,
    observer: Option<Observer>,
) -> Result<(BurnInSummary, Vec<TrajectoryPoint>)> {
    let seed = rng::derive(cfg.seed, SALT_BURN_IN + a.index() as u64);
    let sigma = cfg.sigma2_noise.sqrt();
    let mut adam = AdamState::new(model.arm_param_len(a));
    let mut ema = model.arm_params(a);
    let mut monitor = AbortMonitor::new(cfg);
    let mut traj = Vec::with_capacity(cfg.n_burnin);
    let mut last = BurnInSummary {
        arm: a,
        loss_nll: None,
        loss_w: f64::NAN,
    };
    for k in 0..cfg.n_burnin {
        let mut r = rng::stream(seed, k as u64);
        let batch = sample_batch(ys, cfg.batch, &mut r);
        let mut params = model.arm_params(a);
        let tape = Tape::new();
        let p = tape.vars(&params);
        let mut stats = InversionStats::default();
        let nll = nll_term(model, a, &p, &batch, sigma, &mut r, &mut stats);
        let w = w_term(model, a, &p, &batch, cfg.batch, &mut r);
        let loss = nll.map_or(w, |n| n + w);
        let grads = gradient(&tape, loss, &p);
        let updated = grads.is_some();
        if let Some(g) = grads {
            adam_step(&mut params, &g, &mut adam, cfg.lr);
            model.set_arm_params(a, &params, cfg.flow.power_iters);
            ema_update(&mut ema, &model.arm_params(a), cfg.ema_gamma);
        }
        let point = TrajectoryPoint {
            stage: Stage::BurnIn,
            iteration: k,
            arm: a,
            direction: None,
            loss_nll: nll.map(|v| v.value()),
            loss_w: w.value(),
            q_hat: None,
            loss_q: None,
            q_applied: false,
            kappa: None,
            inversion_attempts: stats.attempts,
            inversion_failures: stats.failures,
            updated,
        };
        if let Some(obs) = observer {
            obs(&point);
        }
        last.loss_nll = point.loss_nll;
        last.loss_w = point.loss_w;
        traj.push(point);
        monitor.record(stats, &format!("burn-in of arm {a}"), k)?;
    }
    if cfg.ema_burn_in {
        model.set_arm_params(a, &ema, cfg.flow.power_iters);
    }
    Ok((last, traj))
}

/// Stage 1: a model of both arms fitted by likelihood and Wasserstein losses.
///
/// The flows are first calibrated to each arm's sample mean and standard
/// deviation; the two arms are independent and fitted in parallel.
pub fn burn_in(
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ApidModel, Vec<BurnInSummary>, Vec<TrajectoryPoint>)> {
    burn_in_observed(dataset, cfg, None)
}

fn burn_in_observed(
    dataset: &Dataset,
    cfg: &TrainConfig,
    observer: Option<Observer>,
) -> Result<(ApidModel, Vec<BurnInSummary>, Vec<TrajectoryPoint>)> {
    validate_data(dataset, cfg)?;
    let mut model = ApidModel::new(
        &cfg.apid(),
        &mut rng::stream(rng::derive(cfg.seed, SALT_INIT), 0),
    )?;
    let data: Vec<Vec<f64>> = Arm::BOTH.iter().map(|&a| dataset.outcomes(a)).collect();
    for a in Arm::BOTH {
        let e = dataset.empirical(a)?;
        model.calibrate(a, e.mean(), e.std().max(1e-6));
    }
    let (mut m0, mut m1) = (model.clone(), model.clone());
    let (r0, r1) = rayon::join(
        || burn_in_arm(&mut m0, Arm::Control, &data[0], cfg, observer),
        || burn_in_arm(&mut m1, Arm::Treated, &data[1], cfg, observer),
    );
    let (s0, t0) = r0?;
    let (s1, t1) = r1?;
    model.flows = [m0.flows[0].clone(), m1.flows[1].clone()];
    model.g = [m0.g[0].clone(), m1.g[1].clone()];
    let mut traj = t0;
    traj.extend(t1);
    Ok((model, vec![s0, s1], traj))
}

/// Stages 2–3 for one bound. Returns the EMA model and the trajectory.
fn optimize_bound(
    burned: &ApidModel,
    query: &CfQuery,
    ys: &[f64],
    support: [f64; 2],
    dir: Direction,
    cfg: &TrainConfig,
    observer: Option<Observer>,
) -> Result<(ApidModel, Vec<TrajectoryPoint>)> {
    let a = query.a;
    let salt = match dir {
        Direction::Upper => SALT_UPPER,
        Direction::Lower => SALT_LOWER,
    };
    let seed = rng::derive(cfg.seed, salt);
    let sigma = cfg.sigma2_noise.sqrt();
    let kopts = KappaOptions {
        method: cfg.curvature,
        mode: cfg.kappa_mode,
        through_points: cfg.grad_through_level_points,
    };
    let mut model = burned.clone();
    let mut adam = AdamState::new(model.arm_param_len(a));
    let mut ema = model.arm_params(a);
    let mut monitor = AbortMonitor::new(cfg);
    let total = cfg.n_query + cfg.n_curv_query;
    let mut traj = Vec::with_capacity(total);
    for k in 0..total {
        let stage = if k < cfg.n_query {
            Stage::Query
        } else {
            Stage::CurvatureQuery
        };
        if k == cfg.n_query && cfg.adam_restart_on_curvature {
            adam = AdamState::new(adam.m.len());
        }
        let mut r = rng::stream(seed, k as u64);
        let batch = sample_batch(ys, cfg.batch, &mut r);
        let mut params = model.arm_params(a);
        let tape = Tape::new();
        let p = tape.vars(&params);
        let mut stats = InversionStats::default();
        let nll = nll_term(&model, a, &p, &batch, sigma, &mut r, &mut stats);
        let w = w_term(&model, a, &p, &batch, cfg.batch, &mut r);
        let mut loss = nll.map_or(w, |n| n + w);
        let q = q_term(
            &model,
            query.a_prime,
            query.y_prime,
            a,
            &p,
            cfg.batch,
            &mut r,
            &mut stats,
        );
        let q_hat = q.map(|v| v.value());
        let lq = q.map(|v| q_loss(v, dir));
        // a query outside the support estimate gives non-informative bounds
        let q_applied =
            q_hat.is_some_and(|v| v >= support[0] && v <= support[1]) && cfg.lambda_q > 0.0;
        if q_applied {
            loss = loss + lq.expect("query estimate present") * cfg.lambda_q;
        }
        let mut kappa = None;
        if stage == Stage::CurvatureQuery {
            if let Some(qv) = q_hat {
                let (kt, _) = kappa_term(&model, a, &p, qv, cfg.batch, &kopts, &mut r, &mut stats);
                if let Some(kt) = kt {
                    kappa = Some(kt.value());
                    if cfg.lambda_kappa > 0.0 {
                        loss = loss + kt * cfg.lambda_kappa;
                    }
                }
            }
        }
        let grads = gradient(&tape, loss, &p);
        let updated = grads.is_some();
        if let Some(g) = grads {
            adam_step(&mut params, &g, &mut adam, cfg.lr);
            model.set_arm_params(a, &params, cfg.flow.power_iters);
            ema_update(&mut ema, &model.arm_params(a), cfg.ema_gamma);
        }
        let point = TrajectoryPoint {
            stage,
            iteration: k,
            arm: a,
            direction: Some(dir),
            loss_nll: nll.map(|v| v.value()),
            loss_w: w.value(),
            q_hat,
            loss_q: lq.map(|v| v.value()),
            q_applied,
            kappa,
            inversion_attempts: stats.attempts,
            inversion_failures: stats.failures,
            updated,
        };
        if let Some(obs) = observer {
            obs(&point);
        }
        traj.push(point);
        let what = match dir {
            Direction::Upper => "upper-bound stage",
            Direction::Lower => "lower-bound stage",
        };
        monitor.record(stats, what, k)?;
    }
    let mut smoothed = model;
    smoothed.set_arm_params(a, &ema, cfg.flow.power_iters);
    Ok((smoothed, traj))
}

/// Lower and upper bounds of `E[Y_a | A = a', Y = y']` under the curvature
/// sensitivity model.
pub fn train_bounds(dataset: &Dataset, query: CfQuery, cfg: &TrainConfig) -> Result<BoundsResult> {
    train_bounds_observed(dataset, query, cfg, None)
}

/// [`train_bounds`] reporting every step to `observer`.
pub fn train_bounds_observed(
    dataset: &Dataset,
    query: CfQuery,
    cfg: &TrainConfig,
    observer: Option<Observer>,
) -> Result<BoundsResult> {
    if query.a == query.a_prime {
        return Err(Error::pre(
            "counterfactual arm must differ from the factual arm",
        ));
    }
    validate_data(dataset, cfg)?;
    let factual = dataset.empirical(query.a_prime)?;
    if !(query.y_prime >= factual.min() && query.y_prime <= factual.max()) {
        return Err(Error::pre(format!(
            "y' = {} lies outside the factual sample range [{}, {}]",
            query.y_prime,
            factual.min(),
            factual.max()
        )));
    }
    let (model, burn_in, burn_in_trajectory) = burn_in_observed(dataset, cfg, observer)?;
    let eval_seed = rng::derive(cfg.seed, SALT_EVAL);
    let burn_in_q_hat = model
        .ecou_estimate(
            query.a_prime,
            query.y_prime,
            query.a,
            cfg.eval_batch,
            eval_seed,
        )?
        .q_hat;
    let cf = dataset.empirical(query.a)?;
    let support = [cf.min(), cf.max()];
    let ys = dataset.outcomes(query.a);
    let (up, lo) = rayon::join(
        || {
            optimize_bound(
                &model,
                &query,
                &ys,
                support,
                Direction::Upper,
                cfg,
                observer,
            )
        },
        || {
            optimize_bound(
                &model,
                &query,
                &ys,
                support,
                Direction::Lower,
                cfg,
                observer,
            )
        },
    );
    let (upper_model, upper_trajectory) = up?;
    let (lower_model, lower_trajectory) = lo?;
    let estimate = |m: &ApidModel| -> Result<f64> {
        Ok(m.ecou_estimate(
            query.a_prime,
            query.y_prime,
            query.a,
            cfg.eval_batch,
            eval_seed,
        )?
        .q_hat)
    };
    Ok(BoundsResult {
        query,
        lower: estimate(&lower_model)?,
        upper: estimate(&upper_model)?,
        support_estimate: support,
        burn_in_q_hat,
        burn_in,
        burn_in_trajectory,
        upper_trajectory,
        lower_trajectory,
        upper_model,
        lower_model,
        config: cfg.clone(),
    })
}
