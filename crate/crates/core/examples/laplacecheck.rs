//! Development probe: exact (quadrature) marginal likelihood vs the Laplace
//! approximation for small M, and the induced likelihood-ratio quality.

use bsfr_core::field::{PointSampler, TemporalModel};
use bsfr_core::kernel::CovKernel;
use bsfr_core::mvn::MvnSpec;
use bsfr_core::rng::RngStream;
use bsfr_core::special::LN_2PI;
use bsfr_core::warp::WarpSpec;
use bsfr_core::wgplrt::{laplace_fit, wgplrt_statistic};
use nalgebra::{DMatrix, DVector};

fn copula_logpdf(warp: &WarpSpec, kinv: &DMatrix<f64>, logdet_k: f64, v: &[f64]) -> Option<f64> {
    let m = v.len();
    let mut g = DVector::zeros(m);
    let mut jac = 0.0;
    for i in 0..m {
        g[i] = warp.inverse(v[i]).ok()?;
        jac += warp.log_dg(v[i]).ok()?;
    }
    Some(-0.5 * (g.transpose() * kinv * &g)[(0, 0)] - 0.5 * logdet_k - 0.5 * m as f64 * LN_2PI + jac)
}

/// log p(Z) = log ∫ copula(Z − ε) N(ε; 0, σ²I) dε by tensor Simpson.
fn exact_log_marginal(
    warp: &WarpSpec,
    kinv: &DMatrix<f64>,
    logdet_k: f64,
    z: &[f64],
    sigma: f64,
) -> f64 {
    let half = 7.0 * sigma;
    let n = 160;
    let step = 2.0 * half / n as f64;
    let w = |i: usize| {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let noise_logpdf = |e: f64| -0.5 * (e / sigma).powi(2) - sigma.ln() - 0.5 * LN_2PI;
    match z.len() {
        1 => {
            let mut acc = 0.0f64;
            for i in 0..=n {
                let e = -half + i as f64 * step;
                if let Some(lp) = copula_logpdf(warp, kinv, logdet_k, &[z[0] - e]) {
                    acc += w(i) * (lp + noise_logpdf(e)).exp();
                }
            }
            (acc * step / 3.0).ln()
        }
        2 => {
            let mut acc = 0.0f64;
            for i in 0..=n {
                let e1 = -half + i as f64 * step;
                for j in 0..=n {
                    let e2 = -half + j as f64 * step;
                    if let Some(lp) =
                        copula_logpdf(warp, kinv, logdet_k, &[z[0] - e1, z[1] - e2])
                    {
                        acc += w(i) * w(j) * (lp + noise_logpdf(e1) + noise_logpdf(e2)).exp();
                    }
                }
            }
            (acc * step * step / 9.0).ln()
        }
        _ => unreachable!(),
    }
}

fn main() {
    let warp = WarpSpec::TukeyGh { g: 0.1, h: 0.4, loc: 1.0, scale: 1.0 };
    let sigma = 0.1;

    // M = 1 comparison over a range of observation values.
    let k1 = DMatrix::identity(1, 1);
    let model = TemporalModel::new(CovKernel::matern12(1.0, 1.0).unwrap(), warp).unwrap();
    let cache = laplace_fit(&model, &[0.0], sigma).unwrap();
    println!("M=1: v_hat {:.4}, A {:.4}", cache.v_hat[0], cache.a[(0, 0)]);
    println!("{:>8} {:>12} {:>12} {:>8}", "z", "exact", "laplace", "diff");
    for z in [-1.0, -0.3, 0.2, 0.6, 1.0, 1.5, 2.5, 4.0, 8.0, 20.0] {
        let exact = exact_log_marginal(&warp, &k1, 0.0, &[z], sigma);
        let lap = cache.approx_log_likelihood(&[z]).unwrap();
        println!("{z:>8.2} {exact:>12.4} {lap:>12.4} {:>8.4}", lap - exact);
    }

    // M = 2: exact LR vs Laplace LR head-to-head on simulated draws.
    let dt = 20.0 / 49.0;
    let times = [0.0, dt];
    let m0 = TemporalModel::new(CovKernel::matern12(1.0, 1.0).unwrap(), warp).unwrap();
    let m1 = TemporalModel::new(CovKernel::matern52(1.0, 1.0).unwrap(), warp).unwrap();
    let c0 = laplace_fit(&m0, &times, sigma).unwrap();
    let c1 = laplace_fit(&m1, &times, sigma).unwrap();

    let prep = |model: &TemporalModel| {
        let k = model.kernel.gram_times(&times);
        let spec = MvnSpec::zero_mean(&k).unwrap();
        let kinv = k.clone().cholesky().unwrap().inverse();
        (kinv, spec.log_det())
    };
    let (kinv0, ld0) = prep(&m0);
    let (kinv1, ld1) = prep(&m1);

    let s0 = PointSampler::new(&m0, &times, sigma).unwrap();
    let s1 = PointSampler::new(&m1, &times, sigma).unwrap();

    let n = 400;
    let mut agree = 0;
    let mut pairs = Vec::new();
    let mut max_err: f64 = 0.0;
    for (hyp, sampler) in [(0, &s0), (1, &s1)] {
        for i in 0..n {
            let z = sampler.draw_stream(&RngStream::new(77, (hyp * n + i) as u64));
            let exact = exact_log_marginal(&warp, &kinv1, ld1, &z, sigma)
                - exact_log_marginal(&warp, &kinv0, ld0, &z, sigma);
            let lap = wgplrt_statistic(&c0, &c1, &z);
            agree += usize::from((exact > 0.0) == (lap > 0.0));
            max_err = max_err.max((lap - exact).abs() / exact.abs().max(1.0));
            pairs.push((hyp, exact, lap));
        }
    }
    println!("\nM=2: sign agreement {}/{}", agree, 2 * n);
    println!("max relative error of statistic: {max_err:.3}");
    let auc = |score: &dyn Fn(&(usize, f64, f64)) -> f64| {
        let mut h0: Vec<f64> = pairs.iter().filter(|p| p.0 == 0).map(|p| score(p)).collect();
        let mut h1: Vec<f64> = pairs.iter().filter(|p| p.0 == 1).map(|p| score(p)).collect();
        h0.sort_by(f64::total_cmp);
        h1.sort_by(f64::total_cmp);
        // probability a random H1 score exceeds a random H0 score
        let mut count = 0usize;
        for &a in &h1 {
            count += h0.iter().filter(|&&b| a > b).count();
        }
        count as f64 / (h0.len() * h1.len()) as f64
    };
    println!("AUC exact LR: {:.4}", auc(&|p| p.1));
    println!("AUC laplace LR: {:.4}", auc(&|p| p.2));
}
