//! Ground-truth level-set quadrature.
//!
//! Level sets `E(y, a) = {u ∈ [0,1]² : f(a,u) = y}` are traced by marching
//! squares with per-edge bisection refinement, then line integrals against
//! arc length give the observational density
//! `P(Y=y | a) = ∫_E ‖∇f‖⁻¹ dℋ¹` and the counterfactual quantities obtained by
//! pushing the same weighted measure through `f(a_cf, ·)`.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::distr::Open01;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scm::{Arm, Scm2D};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Cells per axis.
    pub grid_resolution: usize,
    /// Absolute residual `|f − y|` at which edge bisection stops.
    pub refine_tol: f64,
    /// Connected components shorter than this are discarded.
    pub min_component_length: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_resolution: 512,
            refine_tol: 1e-8,
            min_component_length: 1e-6,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < 16 {
            return Err(Error::pre("grid_resolution must be at least 16"));
        }
        if !(self.refine_tol > 0.0 && self.min_component_length > 0.0) {
            return Err(Error::pre("oracle tolerances must be positive"));
        }
        Ok(())
    }
}

/// Traced level set: one polyline per connected component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetPolyline {
    pub level: f64,
    pub arm: Arm,
    pub segments: Vec<Vec<[f64; 2]>>,
}

impl LevelSetPolyline {
    pub fn length(&self) -> f64 {
        self.segments.iter().map(|c| polyline_length(c)).sum()
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn polyline_length(c: &[[f64; 2]]) -> f64 {
    c.windows(2).map(|w| dist(w[0], w[1])).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum EdgeKey {
    /// Edge from node (i, j) to (i+1, j).
    H(u32, u32),
    /// Edge from node (i, j) to (i, j+1).
    V(u32, u32),
}

/// A scalar field sampled on the `(n+1)²` nodes of a uniform grid over `[0,1]²`.
#[derive(Clone, Debug)]
pub struct FieldGrid {
    n: usize,
    values: Vec<f64>,
}

impl FieldGrid {
    pub fn sample<F>(f: &F, n: usize) -> Result<Self>
    where
        F: Fn([f64; 2]) -> Result<f64> + Sync,
    {
        let rows: Vec<Vec<f64>> = (0..=n)
            .into_par_iter()
            .map(|j| {
                (0..=n)
                    .map(|i| f(node(n, i, j)))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok(FieldGrid {
            n,
            values: rows.concat(),
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Value at node `(i, j)`, i.e. at `u = (i/n, j/n)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.n + 1) + i]
    }

    /// Smallest and largest sampled value.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Connected components of `{f = level}` as polylines.
    ///
    /// Nodes with `f ≥ level` count as above. Saddle cells are resolved by the
    /// sign of `f` at the cell center. Every crossing is refined by bisection
    /// along its cell edge until `|f − level| ≤ cfg.refine_tol`.
    pub fn trace<F>(&self, f: &F, level: f64, cfg: &OracleConfig) -> Result<Vec<Vec<[f64; 2]>>>
    where
        F: Fn([f64; 2]) -> Result<f64>,
    {
        let n = self.n;
        let mut points: HashMap<EdgeKey, [f64; 2]> = HashMap::new();
        let mut segs: Vec<(EdgeKey, EdgeKey)> = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                let above = corners.map(|(ci, cj)| self.at(ci, cj) >= level);
                if above.iter().all(|&b| b == above[0]) {
                    continue;
                }
                let (iu, ju) = (i as u32, j as u32);
                // bottom, right, top, left with their end corners
                let edges = [
                    (EdgeKey::H(iu, ju), 0, 1),
                    (EdgeKey::V(iu + 1, ju), 1, 2),
                    (EdgeKey::H(iu, ju + 1), 3, 2),
                    (EdgeKey::V(iu, ju), 0, 3),
                ];
                let crossing: Vec<usize> = (0..4)
                    .filter(|&e| above[edges[e].1] != above[edges[e].2])
                    .collect();
                let pairs: Vec<(usize, usize)> = if crossing.len() == 2 {
                    vec![(crossing[0], crossing[1])]
                } else {
                    let c = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                    let center_above = f(c)? >= level;
                    if center_above == above[0] {
                        // corners 0 and 2 connect through the center; cut off 1 and 3
                        vec![(0, 1), (2, 3)]
                    } else {
                        vec![(3, 0), (1, 2)]
                    }
                };
                for (ea, eb) in pairs {
                    for &e in &[ea, eb] {
                        let (key, ca, cb) = edges[e];
                        if let Entry::Vacant(slot) = points.entry(key) {
                            let (pa, pb) = (corners[ca], corners[cb]);
                            let p = refine(
                                f,
                                level,
                                node(n, pa.0, pa.1),
                                node(n, pb.0, pb.1),
                                above[ca],
                                cfg.refine_tol,
                            )?;
                            slot.insert(p);
                        }
                    }
                    segs.push((edges[ea].0, edges[eb].0));
                }
            }
        }
        if segs.is_empty() {
            return Err(Error::EmptyLevelSet { level });
        }
        let comps: Vec<Vec<[f64; 2]>> = stitch(&segs)
            .into_iter()
            .map(|keys| keys.iter().map(|k| points[k]).collect::<Vec<_>>())
            .filter(|c| polyline_length(c) >= cfg.min_component_length)
            .collect();
        if comps.is_empty() {
            return Err(Error::EmptyLevelSet { level });
        }
        Ok(comps)
    }
}

fn node(n: usize, i: usize, j: usize) -> [f64; 2] {
    [i as f64 / n as f64, j as f64 / n as f64]
}

/// Bisection on the segment `a → b` for `f = level`; `a_above` is the side of `a`.
fn refine<F>(
    f: &F,
    level: f64,
    a: [f64; 2],
    b: [f64; 2],
    a_above: bool,
    tol: f64,
) -> Result<[f64; 2]>
where
    F: Fn([f64; 2]) -> Result<f64>,
{
    let lerp = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = 0.5;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        best = mid;
        let r = f(lerp(mid))? - level;
        if r.abs() <= tol {
            break;
        }
        if (r >= 0.0) == a_above {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(lerp(best))
}

/// Join segments sharing an edge key into maximal chains (closed loops repeat the first key).
fn stitch(segs: &[(EdgeKey, EdgeKey)]) -> Vec<Vec<EdgeKey>> {
    let mut adj: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segs.iter().enumerate() {
        adj.entry(a).or_default().push(s);
        adj.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    for s0 in 0..segs.len() {
        if used[s0] {
            continue;
        }
        used[s0] = true;
        let walk = |start: EdgeKey, used: &mut Vec<bool>| {
            let mut keys = Vec::new();
            let mut cur = start;
            while let Some(&t) = adj[&cur].iter().find(|&&t| !used[t]) {
                used[t] = true;
                let (a, b) = segs[t];
                cur = if a == cur { b } else { a };
                keys.push(cur);
            }
            keys
        };
        let (a, b) = segs[s0];
        let forward = walk(b, &mut used);
        let backward = walk(a, &mut used);
        let mut chain: Vec<EdgeKey> = backward.into_iter().rev().collect();
        chain.push(a);
        chain.push(b);
        chain.extend(forward);
        out.push(chain);
    }
    out
}

/// Level-set integrals for one SCM arm, with the grid sampled once.
pub struct LevelOracle<'s> {
    scm: &'s Scm2D,
    arm: Arm,
    cfg: OracleConfig,
    grid: FieldGrid,
}

/// Weighted arc-length pieces of a factual level set: `(p₀, p₁, ‖p₁−p₀‖/‖∇f(mid)‖)`.
type Pieces = Vec<([f64; 2], [f64; 2], f64)>;

impl<'s> LevelOracle<'s> {
    pub fn new(scm: &'s Scm2D, arm: Arm, cfg: OracleConfig) -> Result<Self> {
        cfg.validate()?;
        let f = |u: [f64; 2]| scm.eval_f(arm, u);
        let grid = FieldGrid::sample(&f, cfg.grid_resolution)?;
        Ok(LevelOracle {
            scm,
            arm,
            cfg,
            grid,
        })
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    pub fn trace(&self, y: f64) -> Result<LevelSetPolyline> {
        let f = |u: [f64; 2]| self.scm.eval_f(self.arm, u);
        Ok(LevelSetPolyline {
            level: y,
            arm: self.arm,
            segments: self.grid.trace(&f, y, &self.cfg)?,
        })
    }

    fn pieces(&self, y: f64) -> Result<Pieces> {
        let ls = self.trace(y)?;
        let mut out = Vec::new();
        for comp in &ls.segments {
            for w in comp.windows(2) {
                let len = dist(w[0], w[1]);
                if len == 0.0 {
                    continue;
                }
                let mid = [0.5 * (w[0][0] + w[1][0]), 0.5 * (w[0][1] + w[1][1])];
                let g = self.scm.grad_f(self.arm, mid)?;
                let gn = g[0].hypot(g[1]);
                if gn > 0.0 && gn.is_finite() {
                    out.push((w[0], w[1], len / gn));
                }
            }
        }
        Ok(out)
    }

    /// `P(Y = y | a)`.
    pub fn density(&self, y: f64) -> Result<f64> {
        Ok(self.pieces(y)?.iter().map(|p| p.2).sum())
    }

    /// Densities on a list of outcomes; empty level sets contribute 0.
    pub fn density_curve(&self, ys: &[f64]) -> Result<Vec<f64>> {
        ys.par_iter()
            .map(|&y| match self.density(y) {
                Err(Error::EmptyLevelSet { .. }) => Ok(0.0),
                r => r,
            })
            .collect()
    }

    /// `E[Y_{a_cf} | A = a_factual, Y = y']` where `a_factual` is this oracle's arm.
    pub fn ecou(&self, y_prime: f64, a_cf: Arm) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (p0, p1, w) in self.pieces(y_prime)? {
            let mid = [0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])];
            num += w * self.scm.eval_f(a_cf, mid)?;
            den += w;
        }
        if den <= 0.0 {
            return Err(Error::EmptyLevelSet { level: y_prime });
        }
        let (lo, hi) = self.scm.support(a_cf);
        Ok((num / den).clamp(lo, hi))
    }

    /// Density of `Y_{a_cf} | A = a_factual, Y = y'` on an ascending outcome grid.
    ///
    /// Each weighted level-set piece is spread uniformly over the outcome
    /// interval it maps to; bins are centered on the grid points and clipped at
    /// the grid ends. The result integrates to 1 under the trapezoid rule.
    pub fn counterfactual_density(
        &self,
        y_prime: f64,
        a_cf: Arm,
        grid: &[f64],
    ) -> Result<Vec<f64>> {
        if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::pre(
                "density grid must be strictly ascending with at least 2 points",
            ));
        }
        let m = grid.len();
        let mut edges = Vec::with_capacity(m + 1);
        edges.push(grid[0]);
        edges.extend(grid.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        edges.push(grid[m - 1]);
        let mut mass = vec![0.0; m];
        for (p0, p1, w) in self.pieces(y_prime)? {
            let (y0, y1) = (self.scm.eval_f(a_cf, p0)?, self.scm.eval_f(a_cf, p1)?);
            let (lo, hi) = (y0.min(y1), y0.max(y1));
            if hi - lo < 1e-15 {
                let k = edges.partition_point(|&e| e <= lo);
                if (1..=m).contains(&k) {
                    mass[k - 1] += w;
                }
                continue;
            }
            let first = edges.partition_point(|&e| e <= lo).saturating_sub(1);
            for k in first..m {
                if edges[k] >= hi {
                    break;
                }
                let overlap = hi.min(edges[k + 1]) - lo.max(edges[k]);
                if overlap > 0.0 {
                    mass[k] += w * overlap / (hi - lo);
                }
            }
        }
        let mut dens: Vec<f64> = (0..m)
            .map(|k| mass[k] / (edges[k + 1] - edges[k]))
            .collect();
        let total = trapezoid(grid, &dens);
        if total <= 0.0 {
            return Err(Error::EmptyLevelSet { level: y_prime });
        }
        dens.iter_mut().for_each(|d| *d /= total);
        Ok(dens)
    }
}

/// Trapezoid rule for samples `ys` at abscissae `xs`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn check_inside(scm: &Scm2D, a: Arm, y: f64) -> Result<()> {
    let (lo, hi) = scm.support(a);
    if y > lo && y < hi {
        Ok(())
    } else {
        Err(Error::pre(format!(
            "y = {y} is not inside the support ({lo}, {hi}) of arm {a}"
        )))
    }
}

fn check_arms(a_prime: Arm, a: Arm) -> Result<()> {
    if a == a_prime {
        Err(Error::pre(
            "counterfactual arm must differ from the factual arm",
        ))
    } else {
        Ok(())
    }
}

pub fn trace_level_set(
    scm: &Scm2D,
    a: Arm,
    y: f64,
    cfg: &OracleConfig,
) -> Result<LevelSetPolyline> {
    check_inside(scm, a, y)?;
    LevelOracle::new(scm, a, *cfg)?.trace(y)
}

pub fn observational_density(scm: &Scm2D, a: Arm, y: f64, cfg: &OracleConfig) -> Result<f64> {
    check_inside(scm, a, y)?;
    LevelOracle::new(scm, a, *cfg)?.density(y)
}

pub fn ecou_oracle(
    scm: &Scm2D,
    a_prime: Arm,
    y_prime: f64,
    a: Arm,
    cfg: &OracleConfig,
) -> Result<f64> {
    check_arms(a_prime, a)?;
    check_inside(scm, a_prime, y_prime)?;
    LevelOracle::new(scm, a_prime, *cfg)?.ecou(y_prime, a)
}

pub fn counterfactual_density(
    scm: &Scm2D,
    a_prime: Arm,
    y_prime: f64,
    a: Arm,
    grid: &[f64],
    cfg: &OracleConfig,
) -> Result<Vec<f64>> {
    check_arms(a_prime, a)?;
    check_inside(scm, a_prime, y_prime)?;
    LevelOracle::new(scm, a_prime, *cfg)?.counterfactual_density(y_prime, a, grid)
}

/// Monte-Carlo estimate of `P(Y ≤ y | a)`.
pub fn cdf_oracle(scm: &Scm2D, a: Arm, y: f64, n_mc: usize, seed: u64) -> Result<f64> {
    if n_mc == 0 {
        return Err(Error::pre("n_mc must be at least 1"));
    }
    const CHUNK: usize = 1 << 14;
    let chunks = n_mc.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, c as u64);
            let len = CHUNK.min(n_mc - c * CHUNK);
            let mut hits = 0usize;
            for _ in 0..len {
                let u = [r.sample(Open01), r.sample(Open01)];
                if scm.eval_f(a, u)? <= y {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok(hits as f64 / n_mc as f64)
}
