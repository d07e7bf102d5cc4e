use crate::failure::Failure;

/// Parse `lo:hi:n` into `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn parse(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = |why: &str| Failure::Usage(format!("grid `{spec}`: {why} (expected lo:hi:n)"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(bad("need three fields"));
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad("lo is not a number"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad("hi is not a number"))?;
    let n: usize = n.trim().parse().map_err(|_| bad("n is not a count"))?;
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(bad("need finite lo ≤ hi"));
    }
    match n {
        0 => Err(bad("n must be positive")),
        1 if lo != hi => Err(bad("a single point needs lo = hi")),
        1 => Ok(vec![lo]),
        _ => Ok((0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()),
    }
}
