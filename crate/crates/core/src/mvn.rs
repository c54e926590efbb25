//! Multivariate normal machinery: jittered Cholesky factorization, exact
//! sampling, and log densities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::special::LN_2PI;

/// Jitter escalation ladder applied to the diagonal before giving up.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Lower Cholesky factor of `a + jitter·I`, escalating the jitter through
/// [`JITTER_LADDER`] until the factorization succeeds.
pub fn chol_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    debug_assert_eq!(a.nrows(), a.ncols());
    for &jitter in &JITTER_LADDER {
        let mut m = a.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = m.cholesky() {
            return Ok((chol.unpack(), jitter));
        }
    }
    Err(Error::NotPositiveDefinite { max_jitter: *JITTER_LADDER.last().unwrap() })
}

/// A multivariate normal pinned down by its mean and a lower Cholesky factor
/// of the (jittered) covariance.
#[derive(Debug, Clone)]
pub struct MvnSpec {
    mean: DVector<f64>,
    chol_lower: DMatrix<f64>,
    jitter_used: f64,
}

impl MvnSpec {
    pub fn new(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        if mean.len() != covariance.nrows() {
            return Err(Error::DimensionMismatch { expected: covariance.nrows(), got: mean.len() });
        }
        let (chol_lower, jitter_used) = chol_with_jitter(covariance)?;
        Ok(Self { mean, chol_lower, jitter_used })
    }

    pub fn zero_mean(covariance: &DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::zeros(covariance.nrows()), covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.chol_lower
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// One exact draw: `mean + L·z` with `z` i.i.d. standard normal.
    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol_lower * z
    }

    pub fn sample_stream(&self, stream: &RngStream) -> DVector<f64> {
        self.sample(&mut stream.rng())
    }

    /// Exact Gaussian log density via the stored factor.
    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let centered = x - &self.mean;
        let y = self
            .chol_lower
            .solve_lower_triangular(&centered)
            .expect("cholesky factor has positive diagonal");
        let log_det_half: f64 = (0..self.dim()).map(|i| self.chol_lower[(i, i)].ln()).sum();
        Ok(-0.5 * y.norm_squared() - log_det_half - 0.5 * self.dim() as f64 * LN_2PI)
    }

    /// log det of the covariance (including jitter).
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.chol_lower[(i, i)].ln()).sum::<f64>()
    }

    /// Solve `Σ x = b` with the stored factor.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.chol_lower.solve_lower_triangular(b).expect("nonsingular factor");
        self.chol_lower.tr_solve_lower_triangular(&y).expect("nonsingular factor")
    }
}
