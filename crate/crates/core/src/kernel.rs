//! Stationary covariance kernels.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    Matern12,
    Matern52,
}

/// A stationary covariance function `k(x, x') = k(‖x − x'‖)` with signal
/// standard deviation `scale` and length scale `length_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovKernel {
    pub family: KernelFamily,
    pub scale: f64,
    pub length_scale: f64,
}

impl CovKernel {
    pub fn new(family: KernelFamily, scale: f64, length_scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::NonPositiveParameter { name: "scale", value: scale });
        }
        if !(length_scale > 0.0) {
            return Err(Error::NonPositiveParameter { name: "length_scale", value: length_scale });
        }
        Ok(Self { family, scale, length_scale })
    }

    pub fn squared_exponential(scale: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, scale, length_scale)
    }

    pub fn matern12(scale: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern12, scale, length_scale)
    }

    pub fn matern52(scale: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern52, scale, length_scale)
    }

    /// Evaluate at separation `r = ‖x − x'‖ ≥ 0`.
    pub fn eval_dist(&self, r: f64) -> f64 {
        let s2 = self.scale * self.scale;
        let u = r / self.length_scale;
        match self.family {
            KernelFamily::SquaredExponential => s2 * (-0.5 * u * u).exp(),
            KernelFamily::Matern12 => s2 * (-u).exp(),
            KernelFamily::Matern52 => {
                let a = 5.0_f64.sqrt() * u;
                s2 * (1.0 + a + 5.0 * u * u / 3.0) * (-a).exp()
            }
        }
    }

    /// Evaluate on a pair of points of equal dimension.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.eval_dist(r2.sqrt())
    }

    /// Gram matrix on a 1-d point set (time grids).
    pub fn gram_times(&self, ts: &[f64]) -> DMatrix<f64> {
        self.gram_from(ts.len(), |i, j| (ts[i] - ts[j]).abs())
    }

    /// Gram matrix on a 2-d point set (spatial locations).
    pub fn gram_points(&self, pts: &[[f64; 2]]) -> DMatrix<f64> {
        self.gram_from(pts.len(), |i, j| dist2(&pts[i], &pts[j]))
    }

    /// Cross-covariance block between two 2-d point sets.
    pub fn cross_points(&self, rows: &[[f64; 2]], cols: &[[f64; 2]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.eval_dist(dist2(&rows[i], &cols[j]))
        })
    }

    fn gram_from(&self, n: usize, dist: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.eval_dist(0.0);
            for j in 0..i {
                let v = self.eval_dist(dist(i, j));
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}
