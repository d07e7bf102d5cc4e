use serde::{Deserialize, Serialize};

/// Dense row-major matrix, just enough for Lipschitz bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has the wrong length");
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::new(n, n, vec![0.0; n * n]);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Matrix::new(n, n, vec![0.0; n * n]);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, vr) in self.data.chunks(self.cols).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::new(self.cols, self.rows, t)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value of `w` by power iteration on the smaller Gram
/// matrix `G = WᵀW`, squaring the iterate matrix at every step.
///
/// Step `k` evaluates `‖W v‖` with `v ∝ G^(2^(k−1)) v₀` for a fixed start vector,
/// so the result is deterministic. These are Rayleigh estimates along a
/// subsequence of plain power iteration: they never decrease with `k`, never
/// exceed the true norm, and converge even when the top two singular values
/// are nearly tied.
pub fn spectral_norm(w: &Matrix, iters: usize) -> f64 {
    assert!(iters >= 1, "spectral_norm needs at least one iteration");
    if w.cols > w.rows {
        return spectral_norm(&w.transpose(), iters);
    }
    let n = w.cols;
    if n == 0 || w.data.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let v0: Vec<f64> = (0..n)
        .map(|i| 1.0 + (i as f64 * 0.618_033_988_75).fract())
        .collect();
    let mut p = gram(w);
    let mut sigma = 0.0f64;
    for _ in 0..iters {
        let v = p.mul_vec(&v0);
        let nv = norm(&v);
        if nv == 0.0 || !nv.is_finite() {
            break;
        }
        let v: Vec<f64> = v.into_iter().map(|x| x / nv).collect();
        sigma = sigma.max(norm(&w.mul_vec(&v)));
        let next = square_normalized(&p);
        if next == p {
            break;
        }
        p = next;
    }
    sigma
}

/// `WᵀW`.
fn gram(w: &Matrix) -> Matrix {
    let n = w.cols;
    let mut g = vec![0.0; n * n];
    for r in 0..w.rows {
        let row = &w.data[r * n..(r + 1) * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] += row[i] * row[j];
            }
        }
    }
    Matrix::new(n, n, g)
}

/// `P²` rescaled to unit max-entry, so repeated squaring cannot overflow.
fn square_normalized(p: &Matrix) -> Matrix {
    let n = p.rows;
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let a = p.data[i * n + k];
            for j in 0..n {
                q[i * n + j] += a * p.data[k * n + j];
            }
        }
    }
    let m = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m > 0.0 {
        q.iter_mut().for_each(|x| *x /= m);
    }
    Matrix::new(n, n, q)
}
