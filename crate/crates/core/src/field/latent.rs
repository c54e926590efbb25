//! Latent path simulation on a regular 1-d grid.
//!
//! Matérn-1/2 and Matérn-5/2 processes are Markov in a small state vector,
//! so a joint draw over n nodes costs O(n) instead of the O(n²) of a dense
//! Cholesky multiply. The recursions below are exact in distribution (the
//! induced covariance reproduces the kernel gram to rounding), which the
//! unit tests verify lag by lag. Everything else falls back to the dense
//! factorization.

use nalgebra::{DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::kernel::{CovKernel, KernelFamily};
use crate::mvn::MvnSpec;

#[derive(Debug, Clone)]
pub(crate) enum LatentPath {
    Dense(MvnSpec),
    /// Ornstein-Uhlenbeck recursion: f_{k+1} = ρ f_k + √(1−ρ²) ξ.
    Ou { n: usize, rho: f64, innov: f64 },
    /// Third-order state space (value, slope, curvature).
    Matern52 { n: usize, a: Matrix3<f64>, chol_p: Matrix3<f64>, chol_q: Matrix3<f64> },
}

impl LatentPath {
    /// Build for a unit-variance kernel on `n` nodes spaced `step` apart.
    pub(crate) fn new(kernel: &CovKernel, nodes: &[f64]) -> Result<Self> {
        if let Some(step) = regular_step(nodes) {
            match kernel.family {
                KernelFamily::Matern12 if kernel.scale == 1.0 => {
                    let rho = (-step / kernel.length_scale).exp();
                    return Ok(LatentPath::Ou {
                        n: nodes.len(),
                        rho,
                        innov: (1.0 - rho * rho).sqrt(),
                    });
                }
                KernelFamily::Matern52 if kernel.scale == 1.0 => {
                    return Ok(Self::matern52(kernel.length_scale, nodes.len(), step));
                }
                _ => {}
            }
        }
        Ok(LatentPath::Dense(MvnSpec::zero_mean(&kernel.gram_times(nodes))?))
    }

    fn matern52(length_scale: f64, n: usize, step: f64) -> Self {
        let lambda = 5.0_f64.sqrt() / length_scale;
        // Stationary covariance of (f, f', f'').
        let l2 = lambda * lambda;
        let p_inf = Matrix3::new(
            1.0,
            0.0,
            -l2 / 3.0,
            0.0,
            l2 / 3.0,
            0.0,
            -l2 / 3.0,
            0.0,
            l2 * l2,
        );
        // exp(FΔ) with F the companion matrix of (s + λ)³: F = −λI + N,
        // N nilpotent of index 3, so the series terminates.
        let f = Matrix3::new(
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            1.0,
            -lambda * l2,
            -3.0 * l2,
            -3.0 * lambda,
        );
        let nmat = f + Matrix3::identity() * lambda;
        let a = (Matrix3::identity() + nmat * step + nmat * nmat * (step * step / 2.0))
            * (-lambda * step).exp();
        let q = p_inf - a * p_inf * a.transpose();

        let chol_p = p_inf.cholesky().expect("stationary covariance is pd").l();
        let chol_q = robust_chol3(&q);
        LatentPath::Matern52 { n, a, chol_p, chol_q }
    }

    pub(crate) fn dim(&self) -> usize {
        match self {
            LatentPath::Dense(spec) => spec.dim(),
            LatentPath::Ou { n, .. } | LatentPath::Matern52 { n, .. } => *n,
        }
    }

    pub(crate) fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        match self {
            LatentPath::Dense(spec) => spec.sample(rng),
            LatentPath::Ou { n, rho, innov } => {
                let mut out = DVector::zeros(*n);
                let mut f: f64 = rng.sample(StandardNormal);
                out[0] = f;
                for i in 1..*n {
                    f = rho * f + innov * rng.sample::<f64, _>(StandardNormal);
                    out[i] = f;
                }
                out
            }
            LatentPath::Matern52 { n, a, chol_p, chol_q } => {
                let mut out = DVector::zeros(*n);
                let noise = |rng: &mut dyn rand::RngCore| {
                    Vector3::new(
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    )
                };
                let mut state = chol_p * noise(rng);
                out[0] = state[0];
                for i in 1..*n {
                    state = a * state + chol_q * noise(rng);
                    out[i] = state[0];
                }
                out
            }
        }
    }

    /// Model covariance between nodes `i ≤ j`, for validation.
    #[cfg(test)]
    fn cov(&self, i: usize, j: usize) -> f64 {
        match self {
            LatentPath::Dense(spec) => {
                let l = spec.chol_lower();
                (l * l.transpose())[(i, j)]
            }
            LatentPath::Ou { rho, .. } => rho.powi((j - i) as i32),
            LatentPath::Matern52 { a, chol_p, .. } => {
                let p_inf = chol_p * chol_p.transpose();
                let mut prop = p_inf;
                for _ in i..j {
                    prop = a * prop;
                }
                prop[(0, 0)]
            }
        }
    }
}

/// The innovation covariance has eigenvalues spanning many orders of
/// magnitude at fine steps; scale before factorizing and fall back to a
/// tiny diagonal bump if needed.
fn robust_chol3(q: &Matrix3<f64>) -> Matrix3<f64> {
    let scale = q.diagonal().amax().max(1e-300);
    let mut m = q / scale;
    for _ in 0..12 {
        if let Some(c) = m.cholesky() {
            return c.l() * scale.sqrt();
        }
        m += Matrix3::identity() * 1e-15;
    }
    // As a last resort treat the step as degenerate (no innovation).
    Matrix3::zeros()
}

fn regular_step(nodes: &[f64]) -> Option<f64> {
    if nodes.len() < 2 {
        return None;
    }
    let step = nodes[1] - nodes[0];
    if step <= 0.0 {
        return None;
    }
    let tol = 1e-9 * step.abs().max(1.0);
    for w in nodes.windows(2) {
        if ((w[1] - w[0]) - step).abs() > tol {
            return None;
        }
    }
    Some(step)
}
