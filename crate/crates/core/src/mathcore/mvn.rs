use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::{cholesky, DenseMatrix};
use super::rng::RngStream;
use crate::error::{Error, Result};

/// `n` i.i.d. rows from `N(mean, sigma)`, returned as an `n × dim` matrix.
pub fn mvn_sample(
    mean: &[f64],
    sigma: &DenseMatrix,
    n: usize,
    stream: &RngStream,
) -> Result<DenseMatrix> {
    let mut rng = stream.generator();
    mvn_sample_with(mean, sigma, n, &mut rng)
}

/// As [`mvn_sample`], drawing from a caller-owned generator.
pub fn mvn_sample_with<R: Rng + ?Sized>(
    mean: &[f64],
    sigma: &DenseMatrix,
    n: usize,
    rng: &mut R,
) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::domain("mvn_sample needs n >= 1"));
    }
    if sigma.rows() != mean.len() {
        return Err(Error::dim(format!(
            "mean has length {} but sigma is {}x{}",
            mean.len(),
            sigma.rows(),
            sigma.cols()
        )));
    }
    let factor = MvnFactor::new(mean, sigma)?;
    let dim = mean.len();
    let mut out = DenseMatrix::zeros(n, dim);
    let mut row = vec![0.0; dim];
    for i in 0..n {
        factor.draw_into(rng, &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

/// Pre-factored `N(mean, sigma)` for drawing one row at a time.
#[derive(Clone, Debug)]
pub struct MvnFactor {
    mean: Vec<f64>,
    lower: DenseMatrix,
    scratch_dim: usize,
}

impl MvnFactor {
    pub fn new(mean: &[f64], sigma: &DenseMatrix) -> Result<Self> {
        Ok(Self {
            mean: mean.to_vec(),
            lower: cholesky(sigma)?,
            scratch_dim: mean.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.scratch_dim
    }

    /// Fills `out` with one draw. Always consumes exactly `dim` standard normals.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let dim = self.scratch_dim;
        let mut u = [0.0f64; 8];
        let mut heap;
        let u: &mut [f64] = if dim <= 8 {
            &mut u[..dim]
        } else {
            heap = vec![0.0; dim];
            &mut heap
        };
        for v in u.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..dim {
            let mut acc = self.mean[i];
            for (k, uk) in u.iter().enumerate().take(i + 1) {
                acc += self.lower[(i, k)] * uk;
            }
            out[i] = acc;
        }
    }
}
