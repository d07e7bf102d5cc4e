//! Observational datasets, empirical distributions and the synthetic generators.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::Open01;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scm::{box_muller_transform, Arm};

/// Observational records `(A_i, Y_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<(Arm, f64)>,
}

impl Dataset {
    pub fn new(records: Vec<(Arm, f64)>) -> Result<Self> {
        if let Some(i) = records.iter().position(|r| !r.1.is_finite()) {
            return Err(Error::pre(format!("record {i} has a non-finite outcome")));
        }
        Ok(Dataset { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, a: Arm) -> usize {
        self.records.iter().filter(|r| r.0 == a).count()
    }

    /// Outcomes of arm `a` in file order.
    pub fn outcomes(&self, a: Arm) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.0 == a)
            .map(|r| r.1)
            .collect()
    }

    pub fn empirical(&self, a: Arm) -> Result<EmpiricalDist> {
        EmpiricalDist::new(self.outcomes(a))
    }
}

/// A univariate distribution with CDF and quantile function.
pub trait Distribution1D {
    fn cdf(&self, y: f64) -> f64;
    fn quantile(&self, q: f64) -> f64;
    /// `(lower, upper)` support bounds.
    fn support(&self) -> (f64, f64);
}

impl Distribution1D for crate::scm::Triangular {
    fn cdf(&self, y: f64) -> f64 {
        crate::scm::Triangular::cdf(self, y)
    }
    fn quantile(&self, q: f64) -> f64 {
        crate::scm::Triangular::quantile(self, q)
    }
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// Sorted sample with step-function ECDF and type-1 quantiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDist {
    sorted: Vec<f64>,
}

impl EmpiricalDist {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::pre(
                "empirical distribution needs at least one value",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::pre("empirical distribution values must be finite"));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalDist { sorted: values })
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.sorted.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.len() as f64).sqrt()
    }

    /// `#{v ≤ y} / n`.
    pub fn ecdf(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= y) as f64 / self.len() as f64
    }

    /// Order statistic `⌈q n⌉` (1-based); `q = 0` gives the minimum.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.len();
        let q = q.clamp(0.0, 1.0);
        // absorb rounding in q·n so that quantile(k/n) hits order statistic k
        let k = (q * n as f64 - 1e-9).ceil().clamp(1.0, n as f64) as usize;
        self.sorted[k - 1]
    }
}

impl Distribution1D for EmpiricalDist {
    fn cdf(&self, y: f64) -> f64 {
        self.ecdf(y)
    }
    fn quantile(&self, q: f64) -> f64 {
        EmpiricalDist::quantile(self, q)
    }
    fn support(&self) -> (f64, f64) {
        (self.min(), self.max())
    }
}

/// `∫₀¹ |F₁⁻¹(q) − F₂⁻¹(q)| dq` between two empirical distributions.
pub fn wasserstein1(d1: &EmpiricalDist, d2: &EmpiricalDist) -> f64 {
    wasserstein1_sorted(d1.values(), d2.values())
}

/// Wasserstein-1 distance between sorted samples, possibly of different sizes.
///
/// The quantile functions are step functions with jumps at `i/n₁` and `j/n₂`,
/// so the integral is exact over the merged breakpoints. Generic in the first
/// argument so that model samples can carry derivatives.
pub fn wasserstein1_sorted<T: Real>(xs: &[T], ys: &[f64]) -> T {
    let (n, m) = (xs.len(), ys.len());
    assert!(n > 0 && m > 0, "wasserstein1 needs nonempty samples");
    let mut acc = xs[0].lift(0.0);
    let add = |acc: T, x: T, y: f64, w: f64| {
        let d = x - y;
        // |0| has no derivative; an exact tie contributes nothing either way
        if d.value() == 0.0 {
            acc
        } else {
            acc + d.abs() * w
        }
    };
    if n == m {
        for (x, &y) in xs.iter().zip(ys) {
            acc = add(acc, *x, y, 1.0);
        }
        return acc / n as f64;
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut q = 0.0f64;
    while i < n && j < m {
        let qi = (i + 1) as f64 / n as f64;
        let qj = (j + 1) as f64 / m as f64;
        let next = qi.min(qj);
        acc = add(acc, xs[i], ys[j], next - q);
        q = next;
        // compare the integer products to avoid rounding ties
        let (ci, cj) = ((i + 1) * m, (j + 1) * n);
        if ci <= cj {
            i += 1;
        }
        if cj <= ci {
            j += 1;
        }
    }
    acc
}

/// Which synthetic benchmark to draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTag {
    /// Both arms `N(0,1)`.
    Dataset1,
    /// Arm 0: `0.7 N(−0.5, 1.5²) + 0.3 N(1.5, 0.5²)`;
    /// arm 1: `0.3 N(−2.5, 0.35²) + 0.4 N(0.5, 0.75²) + 0.3 N(2.0, 0.5²)`.
    Dataset2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub tag: DatasetTag,
    pub n_per_arm: usize,
    pub seed: u64,
}

/// `(weight, mean, std)` triples per arm.
fn mixture(tag: DatasetTag, a: Arm) -> &'static [(f64, f64, f64)] {
    match (tag, a) {
        (DatasetTag::Dataset1, _) => &[(1.0, 0.0, 1.0)],
        (DatasetTag::Dataset2, Arm::Control) => &[(0.7, -0.5, 1.5), (0.3, 1.5, 0.5)],
        (DatasetTag::Dataset2, Arm::Treated) => {
            &[(0.3, -2.5, 0.35), (0.4, 0.5, 0.75), (0.3, 2.0, 0.5)]
        }
    }
}

/// Standard normal draw by the Box-Müller transform.
pub fn standard_normal(r: &mut Rng) -> f64 {
    box_muller_transform(r.sample(Open01), r.sample(Open01))
}

/// Draw the synthetic dataset; arm 0 records come first, then arm 1.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.n_per_arm < 2 {
        return Err(Error::pre("n_per_arm must be at least 2"));
    }
    let mut records = Vec::with_capacity(2 * spec.n_per_arm);
    for a in Arm::BOTH {
        let comps = mixture(spec.tag, a);
        let mut r = rng::stream(spec.seed, a.index() as u64);
        for _ in 0..spec.n_per_arm {
            let pick: f64 = r.sample(Open01);
            let mut cum = 0.0;
            let mut chosen = comps[comps.len() - 1];
            for &c in comps {
                cum += c.0;
                if pick < cum {
                    chosen = c;
                    break;
                }
            }
            let z = standard_normal(&mut r);
            records.push((a, chosen.1 + chosen.2 * z));
        }
    }
    Dataset::new(records)
}

/// Exact mixture mean of a synthetic arm.
pub fn population_mean(tag: DatasetTag, a: Arm) -> f64 {
    mixture(tag, a).iter().map(|c| c.0 * c.1).sum()
}

/// Parse `a,y` CSV text.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "a,y" => {}
        Some((_, h)) => {
            return Err(Error::MalformedLine {
                line: 1,
                message: format!("expected header `a,y`, found `{}`", h.trim()),
            })
        }
        None => {
            return Err(Error::MalformedLine {
                line: 1,
                message: "missing header `a,y`".into(),
            })
        }
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        let mut parts = s.split(',');
        let (Some(a), Some(y), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::MalformedLine {
                line,
                message: format!("expected 2 fields, found `{s}`"),
            });
        };
        let arm = match a.trim() {
            "0" => Arm::Control,
            "1" => Arm::Treated,
            other => {
                return Err(Error::UnknownArm {
                    line,
                    value: other.to_string(),
                })
            }
        };
        let y: f64 = y.trim().parse().map_err(|_| Error::MalformedLine {
            line,
            message: format!("outcome `{}` is not a number", y.trim()),
        })?;
        if !y.is_finite() {
            return Err(Error::MalformedLine {
                line,
                message: format!("outcome `{y}` is not finite"),
            });
        }
        records.push((arm, y));
    }
    Dataset::new(records)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_csv(&fs::read_to_string(path)?)
}

/// Render as `a,y` CSV with 17 significant digits.
pub fn to_csv(d: &Dataset) -> String {
    let mut s = String::with_capacity(24 * d.len() + 4);
    s.push_str("a,y\n");
    for (a, y) in &d.records {
        let _ = writeln!(s, "{},{:.16e}", a.index(), y);
    }
    s
}

pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_csv(d))?;
    Ok(())
}
