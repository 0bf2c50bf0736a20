//! Least squares through an orthogonal factorization.
//!
//! Columns are orthogonalized by modified Gram–Schmidt applied twice
//! ("twice is enough"), which keeps `Q` orthonormal to working precision even
//! for nearly collinear designs.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// A column whose norm after orthogonalization falls below this fraction of
/// its original norm is treated as collinear.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct QrFactor {
    n: usize,
    cols: usize,
    q: Vec<Vec<f64>>,
    /// Upper-triangular factor over the kept columns, `r[a][b]` for `a ≤ b`.
    r: Vec<Vec<f64>>,
    kept: Vec<usize>,
    dropped: Vec<usize>,
}

impl QrFactor {
    /// Factor `design`, failing on the first collinear column.
    pub fn new(design: &DenseMatrix) -> Result<Self> {
        Self::build(design, &[])
    }

    /// Factor `design`, silently dropping any column listed in `droppable`
    /// that turns out collinear with earlier columns. Other collinear columns
    /// are an error.
    pub fn with_droppable(design: &DenseMatrix, droppable: &[usize]) -> Result<Self> {
        Self::build(design, droppable)
    }

    fn build(design: &DenseMatrix, droppable: &[usize]) -> Result<Self> {
        let n = design.rows();
        let cols = design.cols();
        if n < cols {
            return Err(Error::RankDeficient { column: n });
        }
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(cols);
        let mut r: Vec<Vec<f64>> = Vec::with_capacity(cols);
        let mut kept = Vec::with_capacity(cols);
        let mut dropped = Vec::new();
        for j in 0..cols {
            let mut v = design.column(j);
            let orig_norm = norm(&v);
            let mut coeffs = vec![0.0; q.len()];
            for _pass in 0..2 {
                for (k, qk) in q.iter().enumerate() {
                    let s = dot(qk, &v);
                    axpy(-s, qk, &mut v);
                    coeffs[k] += s;
                }
            }
            let rest = norm(&v);
            if orig_norm == 0.0 || rest <= RANK_TOLERANCE * orig_norm {
                if droppable.contains(&j) {
                    dropped.push(j);
                    continue;
                }
                return Err(Error::RankDeficient { column: j });
            }
            for x in v.iter_mut() {
                *x /= rest;
            }
            coeffs.push(rest);
            for (k, row) in r.iter_mut().enumerate() {
                row.push(coeffs[k]);
            }
            let mut new_row = vec![0.0; coeffs.len()];
            new_row[coeffs.len() - 1] = rest;
            r.push(new_row);
            q.push(v);
            kept.push(j);
        }
        Ok(Self {
            n,
            cols,
            q,
            r,
            kept,
            dropped,
        })
    }

    pub fn dropped_columns(&self) -> &[usize] {
        &self.dropped
    }

    /// Projection coefficients `Qᵀy` and the residual `y − QQᵀy`.
    fn project(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut res = y.to_vec();
        let mut c = vec![0.0; self.q.len()];
        for _pass in 0..2 {
            for (k, qk) in self.q.iter().enumerate() {
                let s = dot(qk, &res);
                axpy(-s, qk, &mut res);
                c[k] += s;
            }
        }
        (c, res)
    }

    pub fn residuals(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        Ok(self.project(y).1)
    }

    /// Coefficients over all design columns (dropped columns get 0) and residuals.
    pub fn solve(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(y)?;
        let (c, res) = self.project(y);
        let m = c.len();
        let mut beta_kept = vec![0.0; m];
        for a in (0..m).rev() {
            let mut s = c[a];
            for b in a + 1..m {
                s -= self.r[a][b] * beta_kept[b];
            }
            beta_kept[a] = s / self.r[a][a];
        }
        let mut beta = vec![0.0; self.cols];
        for (k, &j) in self.kept.iter().enumerate() {
            beta[j] = beta_kept[k];
        }
        Ok((beta, res))
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::dim(format!(
                "response has length {}, design has {} rows",
                y.len(),
                self.n
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares of `y` on the columns of `design`.
pub fn ols_fit(design: &DenseMatrix, y: &[f64]) -> Result<OlsFit> {
    let qr = QrFactor::new(design)?;
    let (coefficients, residuals) = qr.solve(y)?;
    Ok(OlsFit {
        coefficients,
        residuals,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
