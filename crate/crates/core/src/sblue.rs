//! Spatial best linear unbiased estimation from binary sensor decisions.
//!
//! The offline phase assembles the decision-vector moments (means, the full
//! covariance with bivariate-normal orthant terms, and the cross covariance
//! to every query point) plus the closed-form Bayes risk; the online phase
//! is one triangular solve per decision vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bvn::bvnd;
use crate::calibration::TransitionMatrix;
use crate::error::{Error, Result};
use crate::field::{Loc, TemporalModel};
use crate::kernel::CovKernel;
use crate::mvn::{chol_with_jitter, MvnSpec};
use crate::special::{norm_cdf, norm_pdf};
use crate::warp::WarpSpec;

/// Latent spatial field description used by the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialField {
    pub kernel: CovKernel,
    pub mean: f64,
    /// Independent per-point variance added to the diagonal.
    #[serde(default)]
    pub nugget: f64,
}

impl SpatialField {
    pub fn marginal_var(&self) -> f64 {
        self.kernel.eval_dist(0.0) + self.nugget * self.nugget
    }

    pub fn cov(&self, a: &Loc, b: &Loc) -> f64 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        self.kernel.eval_dist((dx * dx + dy * dy).sqrt())
    }
}

/// The four quadrant probabilities of a bivariate normal split at `c` in
/// both coordinates: `(P(<,<), P(<,≥), P(≥,<), P(≥,≥))`. Sums to one within
/// 1e-12; `|rho| = 1` is handled by the degenerate closed form.
pub fn binorm_orthant(
    mu_i: f64,
    mu_j: f64,
    sigma_i: f64,
    sigma_j: f64,
    rho: f64,
    c: f64,
) -> Result<(f64, f64, f64, f64)> {
    if !(sigma_i > 0.0) {
        return Err(Error::NonPositiveParameter { name: "sigma_i", value: sigma_i });
    }
    if !(sigma_j > 0.0) {
        return Err(Error::NonPositiveParameter { name: "sigma_j", value: sigma_j });
    }
    if rho.abs() > 1.0 {
        return Err(Error::InvalidConfig(format!("correlation out of range: {rho}")));
    }
    let a = (c - mu_i) / sigma_i;
    let b = (c - mu_j) / sigma_j;
    let p_gg = bvnd(a, b, rho);
    let p_gl = (norm_cdf(-a) - p_gg).max(0.0);
    let p_lg = (norm_cdf(-b) - p_gg).max(0.0);
    let p_ll = 1.0 - p_gg - p_gl - p_lg;
    Ok((p_ll, p_lg, p_gl, p_gg))
}

/// `E[ŷ] = p11 Φ(−a) + p01 Φ(a)` with `a = (c − μ)/σ`.
fn mean_decision(a: f64, u: &TransitionMatrix) -> f64 {
    u.p11 * norm_cdf(-a) + u.p01 * norm_cdf(a)
}

/// The three moment blocks of the decision vector.
#[derive(Debug, Clone)]
pub struct MomentBlocks {
    pub mean_yhat: DVector<f64>,
    pub cov_yhat: DMatrix<f64>,
    /// Query × sensor cross covariances `Cov[g*, ŷ]`.
    pub cross_cov: DMatrix<f64>,
}

/// Assemble the decision-vector moments for a set of sensors and query
/// points.
///
/// Off-diagonal covariances follow the quadrant expansion (decisions of
/// distinct sensors are independent given the latent pair); the diagonal is
/// the exact Bernoulli variance `E[ŷ](1 − E[ŷ])`.
pub fn moments(
    sensors: &[Loc],
    query: &[Loc],
    field: &SpatialField,
    c: f64,
    transitions: &[TransitionMatrix],
) -> Result<MomentBlocks> {
    let n = sensors.len();
    if transitions.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: transitions.len() });
    }
    for u in transitions {
        u.validate()?;
    }
    let var = field.marginal_var();
    if !(var > 0.0) {
        return Err(Error::NonPositiveParameter { name: "marginal variance", value: var });
    }
    let sigma = var.sqrt();
    let a: Vec<f64> = sensors.iter().map(|_| (c - field.mean) / sigma).collect();

    let mean_yhat = DVector::from_fn(n, |i, _| mean_decision(a[i], &transitions[i]));

    let mut cov_yhat = DMatrix::zeros(n, n);
    for i in 0..n {
        cov_yhat[(i, i)] = mean_yhat[i] * (1.0 - mean_yhat[i]);
        for j in 0..i {
            let rho = (field.cov(&sensors[i], &sensors[j]) / var).clamp(-1.0, 1.0);
            let (p_ll, p_lg, p_gl, p_gg) =
                binorm_orthant(field.mean, field.mean, sigma, sigma, rho, c)?;
            let (ui, uj) = (&transitions[i], &transitions[j]);
            let e_prod = ui.p01 * uj.p01 * p_ll
                + ui.p01 * uj.p11 * p_lg
                + ui.p11 * uj.p01 * p_gl
                + ui.p11 * uj.p11 * p_gg;
            let cov = e_prod - mean_yhat[i] * mean_yhat[j];
            cov_yhat[(i, j)] = cov;
            cov_yhat[(j, i)] = cov;
        }
    }

    let mut cross_cov = DMatrix::zeros(query.len(), n);
    for (q, xq) in query.iter().enumerate() {
        for i in 0..n {
            let u = &transitions[i];
            cross_cov[(q, i)] = norm_pdf(a[i]) / sigma
                * (u.p11 - u.p01)
                * field.cov(xq, &sensors[i]);
        }
    }

    Ok(MomentBlocks { mean_yhat, cov_yhat, cross_cov })
}

/// Precomputed offline quantities: one factorization serves every decision
/// vector observed on the same scene.
#[derive(Debug, Clone)]
pub struct SBlueOffline {
    pub mean_yhat: DVector<f64>,
    pub cov_yhat: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    pub cross_cov: DMatrix<f64>,
    pub mu_star: DVector<f64>,
    pub prior_var: DVector<f64>,
    pub bayes_risk: DVector<f64>,
    pub threshold_c: f64,
}

/// A reconstructed field at the query points.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub g_hat: Vec<f64>,
    pub y_hat: Vec<u8>,
}

pub fn sblue_offline(
    sensors: &[Loc],
    query: &[Loc],
    field: &SpatialField,
    c: f64,
    transitions: &[TransitionMatrix],
) -> Result<SBlueOffline> {
    if sensors.is_empty() || query.is_empty() {
        return Err(Error::InvalidConfig("need at least one sensor and one query point".into()));
    }
    let blocks = moments(sensors, query, field, c, transitions)?;
    let (chol_lower, _) = chol_with_jitter(&blocks.cov_yhat)?;

    let q = query.len();
    let mu_star = DVector::from_element(q, field.mean);
    let prior_var = DVector::from_element(q, field.marginal_var());

    // Risk per query point: prior variance − ‖L⁻¹ c_q‖².
    let mut bayes_risk = DVector::zeros(q);
    for i in 0..q {
        let cq = blocks.cross_cov.row(i).transpose();
        let u = chol_lower.solve_lower_triangular(&cq).expect("positive diagonal");
        bayes_risk[i] = (prior_var[i] - u.norm_squared()).max(0.0);
    }

    Ok(SBlueOffline {
        mean_yhat: blocks.mean_yhat,
        cov_yhat: blocks.cov_yhat,
        chol_lower,
        cross_cov: blocks.cross_cov,
        mu_star,
        prior_var,
        bayes_risk,
        threshold_c: c,
    })
}

impl SBlueOffline {
    pub fn n_sensors(&self) -> usize {
        self.mean_yhat.len()
    }

    pub fn n_query(&self) -> usize {
        self.mu_star.len()
    }

    /// Online phase: estimate the latent field and threshold it.
    pub fn predict(&self, decisions: &[u8]) -> Result<Prediction> {
        let reals: Vec<f64> = decisions.iter().map(|&d| f64::from(d)).collect();
        let g_hat = self.predict_real(&reals)?;
        let y_hat = g_hat.iter().map(|&g| u8::from(g >= self.threshold_c)).collect();
        Ok(Prediction { g_hat, y_hat })
    }

    /// The linear estimate applied to an arbitrary real vector; exposed so
    /// the estimator's affinity can be checked directly.
    pub fn predict_real(&self, decisions: &[f64]) -> Result<Vec<f64>> {
        if decisions.len() != self.n_sensors() {
            return Err(Error::DimensionMismatch {
                expected: self.n_sensors(),
                got: decisions.len(),
            });
        }
        let innovation = DVector::from_row_slice(decisions) - &self.mean_yhat;
        let y = self
            .chol_lower
            .solve_lower_triangular(&innovation)
            .expect("positive diagonal");
        let alpha = self.chol_lower.tr_solve_lower_triangular(&y).expect("positive diagonal");
        let g = &self.mu_star + &self.cross_cov * alpha;
        Ok(g.iter().copied().collect())
    }
}

/// Inputs for the exact-posterior oracle. Warps must be the identity and
/// `N ≤ 3`; this exists to cross-check the two-step pipeline on tiny scenes,
/// not to scale.
pub struct BruteforceScene<'a> {
    pub sensors: &'a [Loc],
    pub field: &'a SpatialField,
    pub c: f64,
    pub query: Loc,
    pub h0: &'a TemporalModel,
    pub h1: &'a TemporalModel,
    pub times: &'a [f64],
    pub sigma_p: f64,
}

/// Posterior probability `P(y* = 1 | Z₁..Z_N)` by explicit enumeration of
/// the 2^N label assignments and tensor quadrature over the latent values.
pub fn posterior_bruteforce(bf: &BruteforceScene, observations: &[Vec<f64>]) -> Result<f64> {
    let n = bf.sensors.len();
    if n > 3 {
        return Err(Error::InvalidConfig("brute-force posterior capped at N <= 3".into()));
    }
    if observations.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: observations.len() });
    }
    if !matches!(bf.h0.warp, WarpSpec::Identity) || !matches!(bf.h1.warp, WarpSpec::Identity) {
        return Err(Error::InvalidConfig("oracle requires identity warps".into()));
    }

    let sigma_star = bf.field.marginal_var().sqrt();
    if n == 0 {
        return Ok(norm_cdf((bf.field.mean - bf.c) / sigma_star));
    }

    // Marginal observation log likelihood under each label: N(0, K_l + σ²I).
    let marginal = |model: &TemporalModel| -> Result<MvnSpec> {
        let mut k = model.kernel.gram_times(bf.times);
        for i in 0..bf.times.len() {
            k[(i, i)] += bf.sigma_p * bf.sigma_p;
        }
        MvnSpec::zero_mean(&k)
    };
    let (m0, m1) = (marginal(bf.h0)?, marginal(bf.h1)?);
    let mut log_like = vec![[0.0_f64; 2]; n];
    for (i, z) in observations.iter().enumerate() {
        let zv = DVector::from_row_slice(z);
        log_like[i] = [m0.logpdf(&zv)?, m1.logpdf(&zv)?];
    }

    // Latent joint over the sensors plus conditional law of g*.
    let mut cov = DMatrix::from_fn(n, n, |i, j| bf.field.cov(&bf.sensors[i], &bf.sensors[j]));
    for i in 0..n {
        cov[(i, i)] = bf.field.marginal_var();
    }
    let (chol, _) = chol_with_jitter(&cov)?;
    let prec = {
        let inv_l = chol
            .clone()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("positive diagonal");
        inv_l.transpose() * inv_l
    };
    let log_norm = -(0..n).map(|i| chol[(i, i)].ln()).sum::<f64>()
        - 0.5 * n as f64 * crate::special::LN_2PI;

    let k_star = DVector::from_fn(n, |i, _| bf.field.cov(&bf.query, &bf.sensors[i]));
    let w_star = &prec * &k_star;
    let var_cond = (bf.field.marginal_var() - k_star.dot(&w_star)).max(1e-12);
    let sd_cond = var_cond.sqrt();

    // Composite Gauss-Legendre per coordinate over the truncated half-lines.
    let nodes_1d = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        let panels = 8;
        let mut out = Vec::with_capacity(panels * 20);
        for p in 0..panels {
            let a = lo + (hi - lo) * p as f64 / panels as f64;
            let b = lo + (hi - lo) * (p + 1) as f64 / panels as f64;
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &(w, x) in crate::bvn::GL20_NODES {
                out.push((mid + half * x, w * half));
                out.push((mid - half * x, w * half));
            }
        }
        out
    };
    let sigma_m = bf.field.marginal_var().sqrt();
    let span = 8.5 * sigma_m;

    let max_ll = log_like
        .iter()
        .flat_map(|l| l.iter())
        .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));

    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for labels in 0..(1_u32 << n) {
        let label = |i: usize| ((labels >> i) & 1) as usize;
        let log_w: f64 = (0..n).map(|i| log_like[i][label(i)] - max_ll).sum();
        let w_label = log_w.exp();
        if w_label == 0.0 {
            continue;
        }

        // Integration region: g_i < c for label 0, g_i ≥ c for label 1.
        let grids: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|i| {
                let (lo, hi) = if label(i) == 1 {
                    (bf.c, bf.field.mean + span)
                } else {
                    (bf.field.mean - span, bf.c)
                };
                if lo >= hi {
                    Vec::new()
                } else {
                    nodes_1d(lo, hi)
                }
            })
            .collect();
        if grids.iter().any(Vec::is_empty) {
            continue;
        }

        let mut region_mass = 0.0;
        let mut region_tail = 0.0;
        let mut g = vec![0.0_f64; n];
        let mut idx = vec![0_usize; n];
        'outer: loop {
            let mut weight = 1.0;
            for i in 0..n {
                let (x, w) = grids[i][idx[i]];
                g[i] = x;
                weight *= w;
            }
            // density of g
            let mut quad = 0.0;
            for i in 0..n {
                for j in 0..n {
                    quad += (g[i] - bf.field.mean) * prec[(i, j)] * (g[j] - bf.field.mean);
                }
            }
            let dens = (log_norm - 0.5 * quad).exp();
            let mu_cond = bf.field.mean
                + (0..n).map(|i| w_star[i] * (g[i] - bf.field.mean)).sum::<f64>();
            let tail = norm_cdf((mu_cond - bf.c) / sd_cond);
            region_mass += weight * dens;
            region_tail += weight * dens * tail;

            // advance the tensor index
            for i in 0..n {
                idx[i] += 1;
                if idx[i] < grids[i].len() {
                    continue 'outer;
                }
                idx[i] = 0;
                if i == n - 1 {
                    break 'outer;
                }
            }
        }

        numerator += w_label * region_tail;
        denominator += w_label * region_mass;
    }

    if denominator <= 0.0 {
        return Err(Error::InvalidConfig("posterior normalization vanished".into()));
    }
    Ok(numerator / denominator)
}
