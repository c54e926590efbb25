//! Inspect the M=2 Gamma-warp quadrature-vs-Laplace comparison pair by pair.

use bsfr_core::field::{PointSampler, TemporalModel};
use bsfr_core::kernel::CovKernel;
use bsfr_core::rng::RngStream;
use bsfr_core::special::LN_2PI;
use bsfr_core::warp::{Affine, WarpSpec};
use bsfr_core::wgplrt::laplace_fit;

fn quadrature_log_marginal(warp: &WarpSpec, kernel: &CovKernel, z: &[f64; 2], sigma: f64) -> f64 {
    let k = kernel.gram_times(&[0.0, 1.0]);
    let kinv = k.clone().cholesky().unwrap().inverse();
    let logdet =
        k.cholesky().unwrap().l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let copula = |v: &[f64; 2]| -> Option<f64> {
        let g0 = warp.inverse(v[0]).ok()?;
        let g1 = warp.inverse(v[1]).ok()?;
        let jac = warp.log_dg(v[0]).ok()? + warp.log_dg(v[1]).ok()?;
        let quad = g0 * g0 * kinv[(0, 0)] + 2.0 * g0 * g1 * kinv[(0, 1)] + g1 * g1 * kinv[(1, 1)];
        Some(-0.5 * quad - 0.5 * logdet - LN_2PI + jac)
    };
    let half = 7.0 * sigma;
    let n = 400;
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
    let noise = |e: f64| -0.5 * (e / sigma).powi(2) - sigma.ln() - 0.5 * LN_2PI;
    let mut acc = 0.0_f64;
    for i in 0..=n {
        let e1 = -half + i as f64 * step;
        for j in 0..=n {
            let e2 = -half + j as f64 * step;
            if let Some(lp) = copula(&[z[0] - e1, z[1] - e2]) {
                acc += w(i) * w(j) * (lp + noise(e1) + noise(e2)).exp();
            }
        }
    }
    (acc * step * step / 9.0).ln()
}

fn main() {
    let warp = WarpSpec::Gamma { shape: 53.7457, scale: 0.1771, post: Affine { c0: 10.0, c1: -1.0 } };
    let kernel = CovKernel::matern52(1.0, 3.7622).unwrap();
    let model = TemporalModel::new(kernel, warp).unwrap();
    let sigma = 0.1;
    let times = [0.0, 1.0];
    let cache = laplace_fit(&model, &times, sigma).unwrap();
    println!("v_hat = {:?}", cache.v_hat.as_slice());
    let sampler = PointSampler::new(&model, &times, sigma).unwrap();
    println!("{:>3} {:>9} {:>9} {:>10} {:>10} {:>8}", "i", "z0", "z1", "exact", "laplace", "rel");
    for i in 0..20 {
        let z = sampler.draw_stream(&RngStream::new(600, i));
        let exact = quadrature_log_marginal(&warp, &kernel, &[z[0], z[1]], sigma);
        let approx = cache.approx_log_likelihood(&z).unwrap();
        let rel = (approx - exact).abs() / exact.abs().max(1e-9);
        println!(
            "{i:>3} {:>9.4} {:>9.4} {exact:>10.4} {approx:>10.4} {rel:>8.3}",
            z[0], z[1]
        );
    }
}
