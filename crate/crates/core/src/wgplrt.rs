//! Likelihood-ratio test for point sensors.
//!
//! The marginal likelihood of a warped-GP observation vector is an
//! intractable integral; it is replaced by a Gaussian obtained from a
//! second-order expansion of
//!
//! `Q(v) = −½ G(v)ᵀ K⁻¹ G(v) + Σ_m log |dG/dv|(v_m)`
//!
//! around its maximizer. The expansion constants and the maximizer are
//! precomputed once per hypothesis and shared by every sensor observing on
//! the same schedule.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TemporalModel;
use crate::mvn::MvnSpec;
use crate::rng::RngStream;
use crate::special::LN_2PI;
use crate::warp::WarpSpec;

const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 200;
const RESTARTS: usize = 5;
const FD_STEP: f64 = 1e-5;

/// `Q(v)` for one hypothesis, using the stored factor of `K`.
pub fn q_function(model: &TemporalModel, k_gram: &MvnSpec, v: &[f64]) -> Result<f64> {
    if v.len() != k_gram.dim() {
        return Err(Error::DimensionMismatch { expected: k_gram.dim(), got: v.len() });
    }
    let mut logdg_sum = 0.0;
    let mut g = DVector::zeros(v.len());
    for (i, &vi) in v.iter().enumerate() {
        g[i] = model.warp.inverse(vi)?;
        logdg_sum += model.warp.log_dg(vi)?;
    }
    let kinv_g = k_gram.solve(&g);
    Ok(-0.5 * g.dot(&kinv_g) + logdg_sum)
}

/// Everything the test statistic needs about one hypothesis, fitted once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplaceCache {
    /// Maximizer of Q.
    pub v_hat: DVector<f64>,
    /// Negative Hessian of Q at the maximizer, symmetrized.
    pub a: DMatrix<f64>,
    pub q_at_vhat: f64,
    pub logdet_k: f64,
    /// `log det(A + σ_P⁻² I)`.
    pub logdet_a_plus: f64,
    /// `(A⁻¹ + σ_P² I)⁻¹`, assembled as `A − A (A + σ_P⁻² I)⁻¹ A`.
    pub precision: DMatrix<f64>,
    pub sigma_p: f64,
    /// `log Ĉ` of the approximated likelihood.
    pub log_c: f64,
}

impl LaplaceCache {
    pub fn dim(&self) -> usize {
        self.v_hat.len()
    }

    /// Log of the approximated marginal likelihood at an observation vector.
    pub fn approx_log_likelihood(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        let d = DVector::from_row_slice(z) - &self.v_hat;
        Ok(self.log_c - 0.5 * d.dot(&(&self.precision * &d)))
    }

    fn quad_form(&self, z: &[f64]) -> f64 {
        let d = DVector::from_row_slice(z) - &self.v_hat;
        d.dot(&(&self.precision * &d))
    }
}

/// Per-coordinate first and second derivatives of `G` and `log |dG|`,
/// central finite differences except for the identity warp where everything
/// is closed form.
fn coord_derivs(warp: &WarpSpec, v: f64) -> Result<(f64, f64, f64, f64)> {
    if matches!(warp, WarpSpec::Identity) {
        return Ok((1.0, 0.0, 0.0, 0.0));
    }
    let gm = warp.inverse(v - FD_STEP)?;
    let g0 = warp.inverse(v)?;
    let gp = warp.inverse(v + FD_STEP)?;
    let lm = warp.log_dg(v - FD_STEP)?;
    let lp = warp.log_dg(v + FD_STEP)?;
    let l0 = warp.log_dg(v)?;
    let dg = (gp - gm) / (2.0 * FD_STEP);
    let d2g = (gp - 2.0 * g0 + gm) / (FD_STEP * FD_STEP);
    let dl = (lp - lm) / (2.0 * FD_STEP);
    let d2l = (lp - 2.0 * l0 + lm) / (FD_STEP * FD_STEP);
    Ok((dg, d2g, dl, d2l))
}

struct QDerivs {
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn q_derivatives(model: &TemporalModel, k_gram: &MvnSpec, v: &DVector<f64>) -> Result<QDerivs> {
    let m = v.len();
    let mut g = DVector::zeros(m);
    for i in 0..m {
        g[i] = model.warp.inverse(v[i])?;
    }
    let kinv_g = k_gram.solve(&g);

    let mut dg = DVector::zeros(m);
    let mut grad = DVector::zeros(m);
    let mut diag = DVector::zeros(m);
    for i in 0..m {
        let (dgi, d2gi, dli, d2li) = coord_derivs(&model.warp, v[i])?;
        dg[i] = dgi;
        grad[i] = -kinv_g[i] * dgi + dli;
        diag[i] = -kinv_g[i] * d2gi + d2li;
    }

    // ∇²Q = −D K⁻¹ D − diag((K⁻¹G)∘G'' − L'')  with D = diag(G').
    let kinv = {
        let id = DMatrix::identity(m, m);
        let mut cols = DMatrix::zeros(m, m);
        for j in 0..m {
            let col = k_gram.solve(&DVector::from_column_slice(id.column(j).as_slice()));
            cols.set_column(j, &col);
        }
        cols
    };
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            hess[(i, j)] = -dg[i] * kinv[(i, j)] * dg[j];
        }
        hess[(i, i)] += diag[i];
    }
    Ok(QDerivs { grad, hess })
}

/// Newton ascent of Q with Armijo backtracking; the negative Hessian is
/// regularized by `+λI` with λ doubling from 1e-8 whenever it fails to be
/// positive definite.
fn maximize_q(
    model: &TemporalModel,
    k_gram: &MvnSpec,
    start: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let mut v = start.clone();
    let mut q = q_function(model, k_gram, v.as_slice())?;
    let mut last_grad_norm = f64::INFINITY;

    for _ in 0..MAX_ITER {
        let der = q_derivatives(model, k_gram, &v)?;
        let grad_norm = der.grad.amax();
        last_grad_norm = grad_norm;
        if grad_norm <= GRAD_TOL {
            let a = 0.5 * (-&der.hess - der.hess.transpose());
            return Ok((v, a, q));
        }

        // Solve (−H + λI) d = grad for an ascent direction.
        let mut lambda = 0.0;
        let dir = loop {
            let mut b = -der.hess.clone();
            if lambda > 0.0 {
                for i in 0..b.nrows() {
                    b[(i, i)] += lambda;
                }
            }
            if let Some(chol) = b.cholesky() {
                break chol.solve(&der.grad);
            }
            lambda = if lambda == 0.0 { 1e-8 } else { lambda * 2.0 };
            if lambda > 1e12 {
                return Err(Error::NonConvergence { iterations: MAX_ITER, grad_norm });
            }
        };

        // Armijo backtracking, treating domain violations as −∞.
        let slope = der.grad.dot(&dir);
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-14 {
            let cand = &v + alpha * &dir;
            if let Ok(qc) = q_function(model, k_gram, cand.as_slice()) {
                if qc >= q + 1e-4 * alpha * slope {
                    v = cand;
                    q = qc;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITER, grad_norm: last_grad_norm })
}

/// Fit the Laplace cache for one hypothesis.
///
/// The ascent starts from `v = (W(0), …, W(0))`; on non-convergence it is
/// retried from up to five perturbed starts (`W(δ)`, `δ ~ N(0, 0.25)` in the
/// latent space, deterministic stream).
pub fn laplace_fit(model: &TemporalModel, times: &[f64], sigma_p: f64) -> Result<LaplaceCache> {
    laplace_fit_with_nugget(model, times, sigma_p, 0.0)
}

/// [`laplace_fit`] with an extra variance added to the gram diagonal.
pub fn laplace_fit_with_nugget(
    model: &TemporalModel,
    times: &[f64],
    sigma_p: f64,
    nugget: f64,
) -> Result<LaplaceCache> {
    model.validate()?;
    if !(sigma_p > 0.0) {
        return Err(Error::NonPositiveParameter { name: "sigma_p", value: sigma_p });
    }
    let mut gram = model.kernel.gram_times(times);
    for i in 0..times.len() {
        gram[(i, i)] += nugget;
    }
    let k_gram = MvnSpec::zero_mean(&gram)?;
    let m = times.len();

    let w0 = model.warp.forward(0.0);
    let mut attempt = maximize_q(model, &k_gram, &DVector::from_element(m, w0));
    if attempt.is_err() {
        let mut rng = RngStream::new(0x5747_504c, 0).rng();
        for _ in 0..RESTARTS {
            let start = DVector::from_fn(m, |_, _| {
                model.warp.forward(0.5 * rng.sample::<f64, _>(StandardNormal))
            });
            attempt = maximize_q(model, &k_gram, &start);
            if attempt.is_ok() {
                break;
            }
        }
    }
    let (v_hat, a, q_at_vhat) = attempt?;

    // Condition 4: the curvature matrix must be positive definite as is.
    if a.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite { max_jitter: 0.0 });
    }

    let sigma_inv2 = 1.0 / (sigma_p * sigma_p);
    let mut a_plus = a.clone();
    for i in 0..m {
        a_plus[(i, i)] += sigma_inv2;
    }
    let chol = a_plus
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { max_jitter: 0.0 })?;
    let logdet_a_plus =
        2.0 * (0..m).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
    // Woodbury: (A⁻¹ + σ²I)⁻¹ = A − A (A + σ⁻²I)⁻¹ A.
    let precision = {
        let x = chol.solve(&a);
        let p = &a - &a * x;
        0.5 * (&p + p.transpose())
    };

    let logdet_k = k_gram.log_det();
    let log_c = -0.5 * logdet_k - 0.5 * m as f64 * LN_2PI - m as f64 * sigma_p.ln() + q_at_vhat
        - 0.5 * logdet_a_plus;

    Ok(LaplaceCache {
        v_hat,
        a,
        q_at_vhat,
        logdet_k,
        logdet_a_plus,
        precision,
        sigma_p,
        log_c,
    })
}

/// `−log Λ̂(Z)`, assembled from the two caches' expansion constants.
/// Algebraically equal to `ll₁(Z) − ll₀(Z)`.
pub fn wgplrt_statistic(cache0: &LaplaceCache, cache1: &LaplaceCache, z: &[f64]) -> f64 {
    debug_assert_eq!(cache0.dim(), cache1.dim());
    0.5 * (cache0.logdet_a_plus + cache0.logdet_k - 2.0 * cache0.q_at_vhat
        - cache1.logdet_a_plus
        - cache1.logdet_k
        + 2.0 * cache1.q_at_vhat)
        + 0.5 * cache0.quad_form(z)
        - 0.5 * cache1.quad_form(z)
}

/// Algorithm step: reject H0 (decide 1) iff the statistic exceeds
/// `−log γᴾ`; ties keep the null.
pub fn wgplrt_decide(statistic: f64, log_gamma_p: f64) -> u8 {
    u8::from(statistic > -log_gamma_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::CovKernel;
    use crate::warp::Affine;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn identity_model(kernel: CovKernel) -> TemporalModel {
        TemporalModel::new(kernel, WarpSpec::Identity).unwrap()
    }

    fn k_spec(model: &TemporalModel, times: &[f64]) -> MvnSpec {
        MvnSpec::zero_mean(&model.kernel.gram_times(times)).unwrap()
    }

    #[test]
    fn q_identity_values() {
        let model = identity_model(CovKernel::matern12(1.0, 1e9).unwrap());
        // Near-unit length scale irrelevant: force K = I via distinct times
        // far apart on a Matern-1/2 with tiny length scale.
        let model_indep = identity_model(CovKernel::matern12(1.0, 1e-9).unwrap());
        let times = [0.0, 1.0];
        let k = k_spec(&model_indep, &times);
        assert_abs_diff_eq!(
            q_function(&model_indep, &k, &[0.0, 0.0]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            q_function(&model_indep, &k, &[1.0, 1.0]).unwrap(),
            -1.0,
            epsilon = 1e-9
        );
        let _ = model;
    }

    #[test]
    fn q_gamma_single_point_matches_direct_composition() {
        let warp = WarpSpec::Gamma { shape: 2.0, scale: 1.0, post: Affine::IDENTITY };
        let model = TemporalModel::new(CovKernel::matern12(1.0, 1.0).unwrap(), warp).unwrap();
        let k = k_spec(&model, &[0.0]);
        let v = 1.0;
        let expected = -0.5 * warp.inverse(v).unwrap().powi(2) + warp.log_dg(v).unwrap();
        assert_abs_diff_eq!(q_function(&model, &k, &[v]).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn q_rejects_out_of_domain() {
        let warp = WarpSpec::Gamma { shape: 2.0, scale: 1.0, post: Affine::IDENTITY };
        let model = TemporalModel::new(CovKernel::matern12(1.0, 1.0).unwrap(), warp).unwrap();
        let k = k_spec(&model, &[0.0]);
        assert!(q_function(&model, &k, &[-1.0]).is_err());
    }

    #[test]
    fn identity_fit_lands_on_zero_with_exact_curvature() {
        let model = identity_model(CovKernel::matern52(1.0, 1.0).unwrap());
        let times: Vec<f64> = (0..6).map(|i| i as f64 * 0.5).collect();
        let cache = laplace_fit(&model, &times, 0.1).unwrap();
        assert!(cache.v_hat.amax() < 1e-9);
        let k = model.kernel.gram_times(&times);
        let kinv = k.clone().cholesky().unwrap().inverse();
        assert_relative_eq!((&cache.a - &kinv).norm() / kinv.norm(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn single_point_gamma_fit_matches_grid_search() {
        let warp = WarpSpec::Gamma { shape: 2.0, scale: 1.0, post: Affine::IDENTITY };
        let model = TemporalModel::new(CovKernel::matern12(1.0, 1.0).unwrap(), warp).unwrap();
        let cache = laplace_fit(&model, &[0.0], 0.1).unwrap();

        let k = k_spec(&model, &[0.0]);
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut v = 1e-4;
        while v < 20.0 {
            if let Ok(q) = q_function(&model, &k, &[v]) {
                if q > best.0 {
                    best = (q, v);
                }
            }
            v += 1e-4;
        }
        assert_abs_diff_eq!(cache.v_hat[0], best.1, epsilon = 2e-3);
    }

    #[test]
    fn experiment_h0_model_converges() {
        let model = TemporalModel::new(
            CovKernel::matern12(1.0, 1.0).unwrap(),
            WarpSpec::TukeyGh { g: 0.1, h: 0.4, loc: 1.0, scale: 1.0 },
        )
        .unwrap();
        let times: Vec<f64> = (0..50).map(|i| 20.0 * i as f64 / 49.0).collect();
        let cache = laplace_fit(&model, &times, 0.1).unwrap();
        // Convergence contract: gradient at the maximizer below tolerance.
        let k = k_spec(&model, &times);
        let der = q_derivatives(&model, &k, &cache.v_hat).unwrap();
        assert!(der.grad.amax() <= 1e-6, "grad norm {}", der.grad.amax());
    }

    #[test]
    fn laplace_is_exact_for_identity_warps() {
        let model = identity_model(CovKernel::matern52(1.0, 0.8).unwrap());
        let times: Vec<f64> = (0..8).map(|i| i as f64 * 0.7).collect();
        let sigma = 0.3;
        let cache = laplace_fit(&model, &times, sigma).unwrap();

        let mut marg = model.kernel.gram_times(&times);
        for i in 0..times.len() {
            marg[(i, i)] += sigma * sigma;
        }
        let exact = MvnSpec::zero_mean(&marg).unwrap();
        let mut rng = RngStream::new(21, 0).rng();
        for _ in 0..50 {
            let z: Vec<f64> =
                (0..times.len()).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let got = cache.approx_log_likelihood(&z).unwrap();
            let want = exact.logpdf(&DVector::from_row_slice(&z)).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-8);
        }
    }

    #[test]
    fn likelihood_at_vhat_is_log_c() {
        let model = TemporalModel::new(
            CovKernel::matern12(1.0, 1.0).unwrap(),
            WarpSpec::TukeyGh { g: 0.1, h: 0.4, loc: 1.0, scale: 1.0 },
        )
        .unwrap();
        let cache = laplace_fit(&model, &[0.0, 1.0, 2.0], 0.1).unwrap();
        let ll = cache.approx_log_likelihood(cache.v_hat.as_slice()).unwrap();
        assert_abs_diff_eq!(ll, cache.log_c, epsilon = 1e-12);
    }

    #[test]
    fn statistic_of_identical_hypotheses_vanishes() {
        let model = identity_model(CovKernel::matern12(1.0, 1.0).unwrap());
        let cache = laplace_fit(&model, &[0.0, 0.5, 1.0], 0.2).unwrap();
        for z in [[0.1, -0.4, 2.0], [5.0, 5.0, 5.0]] {
            assert_abs_diff_eq!(wgplrt_statistic(&cache, &cache, &z), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn statistic_matches_exact_gaussian_log_ratio_for_identity() {
        let m0 = identity_model(CovKernel::matern12(1.0, 1.0).unwrap());
        let m1 = identity_model(CovKernel::matern52(1.0, 1.0).unwrap());
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.4).collect();
        let sigma = 0.1;
        let c0 = laplace_fit(&m0, &times, sigma).unwrap();
        let c1 = laplace_fit(&m1, &times, sigma).unwrap();

        let noisy = |model: &TemporalModel| {
            let mut k = model.kernel.gram_times(&times);
            for i in 0..times.len() {
                k[(i, i)] += sigma * sigma;
            }
            MvnSpec::zero_mean(&k).unwrap()
        };
        let (n0, n1) = (noisy(&m0), noisy(&m1));
        let mut rng = RngStream::new(33, 0).rng();
        for _ in 0..20 {
            let z: Vec<f64> =
                (0..times.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let zv = DVector::from_row_slice(&z);
            let exact = n1.logpdf(&zv).unwrap() - n0.logpdf(&zv).unwrap();
            assert_abs_diff_eq!(wgplrt_statistic(&c0, &c1, &z), exact, epsilon = 1e-8);
        }
    }

    #[test]
    fn statistic_consistent_with_likelihood_difference() {
        let m0 = TemporalModel::new(
            CovKernel::matern12(1.0, 1.0).unwrap(),
            WarpSpec::TukeyGh { g: 0.1, h: 0.4, loc: 1.0, scale: 1.0 },
        )
        .unwrap();
        let m1 = TemporalModel::new(
            CovKernel::matern52(1.0, 1.0).unwrap(),
            WarpSpec::TukeyGh { g: 0.1, h: 0.4, loc: 1.0, scale: 1.0 },
        )
        .unwrap();
        let times: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let c0 = laplace_fit(&m0, &times, 0.1).unwrap();
        let c1 = laplace_fit(&m1, &times, 0.1).unwrap();
        let z = [1.2, 0.8, 1.5, 0.9, 1.1];
        let diff = c1.approx_log_likelihood(&z).unwrap() - c0.approx_log_likelihood(&z).unwrap();
        assert_abs_diff_eq!(wgplrt_statistic(&c0, &c1, &z), diff, epsilon = 1e-10);
    }

    #[test]
    fn vhat_is_a_local_maximum() {
        let model = TemporalModel::new(
            CovKernel::matern12(1.0, 1.0).unwrap(),
            WarpSpec::TukeyGh { g: 0.1, h: 0.4, loc: 1.0, scale: 1.0 },
        )
        .unwrap();
        let times: Vec<f64> = (0..6).map(|i| i as f64 * 0.8).collect();
        let cache = laplace_fit(&model, &times, 0.1).unwrap();
        let k = k_spec(&model, &times);
        let q_star = q_function(&model, &k, cache.v_hat.as_slice()).unwrap();
        let mut rng = RngStream::new(8, 0).rng();
        for _ in 0..100 {
            let mut delta = DVector::from_fn(times.len(), |_, _| {
                rng.sample::<f64, _>(StandardNormal)
            });
            delta *= 1e-3 / delta.norm();
            let v = &cache.v_hat + delta;
            let q = q_function(&model, &k, v.as_slice()).unwrap();
            assert!(q <= q_star + 1e-12, "Q({v:?}) = {q} exceeds Q(v_hat) = {q_star}");
        }
    }

    #[test]
    fn curvature_matches_finite_difference_hessian() {
        let model = TemporalModel::new(
            CovKernel::matern12(1.0, 1.0).unwrap(),
            WarpSpec::Gamma { shape: 2.0, scale: 1.0, post: Affine::IDENTITY },
        )
        .unwrap();
        let times: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let cache = laplace_fit(&model, &times, 0.1).unwrap();
        let k = k_spec(&model, &times);

        let h = 1e-4;
        let m = times.len();
        let q_at = |v: &DVector<f64>| q_function(&model, &k, v.as_slice()).unwrap();
        for i in 0..m {
            for j in 0..m {
                let mut vpp = cache.v_hat.clone();
                let mut vpm = cache.v_hat.clone();
                let mut vmp = cache.v_hat.clone();
                let mut vmm = cache.v_hat.clone();
                vpp[i] += h;
                vpp[j] += h;
                vpm[i] += h;
                vpm[j] -= h;
                vmp[i] -= h;
                vmp[j] += h;
                vmm[i] -= h;
                vmm[j] -= h;
                let fd = -(q_at(&vpp) - q_at(&vpm) - q_at(&vmp) + q_at(&vmm)) / (4.0 * h * h);
                let got = cache.a[(i, j)];
                let scale = got.abs().max(1.0);
                assert!(
                    (got - fd).abs() / scale < 1e-4,
                    "A[{i},{j}] = {got} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn decide_follows_the_threshold_with_ties_to_null() {
        // statistic == −log γ stays with H0
        assert_eq!(wgplrt_decide(2.5, -2.5), 0);
        assert_eq!(wgplrt_decide(f64::INFINITY, -178.0), 1);
        assert_eq!(wgplrt_decide(2.500001, -2.5), 1);
        // monotone: lowering the threshold never flips 1 → 0
        let stat = 0.7;
        let d_tight = wgplrt_decide(stat, 0.0); // threshold 0
        let d_loose = wgplrt_decide(stat, 5.0); // threshold −5
        assert!(d_loose >= d_tight);
    }

    #[test]
    fn fit_rejects_zero_noise() {
        let model = identity_model(CovKernel::matern12(1.0, 1.0).unwrap());
        assert!(laplace_fit(&model, &[0.0, 1.0], 0.0).is_err());
    }
}
