//! Second probe round: regularization choices inside the Laplace fit.

use bsfr_core::calibration::{roc, threshold_for_alpha, transition_matrix, StatKind, StatisticSample};
use bsfr_core::field::{linspace, PointSampler, TemporalModel};
use bsfr_core::kernel::CovKernel;
use bsfr_core::rng::RngStream;
use bsfr_core::warp::WarpSpec;
use bsfr_core::wgplrt::{laplace_fit_with_nugget, wgplrt_statistic};

fn main() {
    let warp = WarpSpec::TukeyGh { g: 0.1, h: 0.4, loc: 1.0, scale: 1.0 };
    let sigma = 0.1;
    let times = linspace(0.0, 20.0, 50);
    let m0 = TemporalModel::new(CovKernel::matern12(1.0, 1.0).unwrap(), warp).unwrap();
    let m1 = TemporalModel::new(CovKernel::matern52(1.0, 1.0).unwrap(), warp).unwrap();

    // Eigenvalue extremes of the grams.
    for (name, model) in [("K0 (matern12)", &m0), ("K1 (matern52)", &m1)] {
        let k = model.kernel.gram_times(&times);
        let eig = k.symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{name}: eig in [{min:.3e}, {max:.3e}]");
    }

    let s0 = PointSampler::new(&m0, &times, sigma).unwrap();
    let s1 = PointSampler::new(&m1, &times, sigma).unwrap();
    let n = 4000;
    let draws: Vec<(usize, Vec<f64>)> = [(0usize, &s0), (1usize, &s1)]
        .iter()
        .flat_map(|(hyp, sampler)| {
            (0..n).map(move |i| {
                (*hyp, sampler.draw_stream(&RngStream::new(4242, (hyp * n + i) as u64)))
            })
        })
        .collect();

    for nugget in [0.0, 1e-6, 1e-4, 1e-2, sigma * sigma, 0.1, 1.0] {
        let c0 = laplace_fit_with_nugget(&m0, &times, sigma, nugget).unwrap();
        let c1 = laplace_fit_with_nugget(&m1, &times, sigma, nugget).unwrap();
        let mut h0 = Vec::new();
        let mut h1 = Vec::new();
        for (hyp, z) in &draws {
            let s = wgplrt_statistic(&c0, &c1, z);
            if *hyp == 0 {
                h0.push(s);
            } else {
                h1.push(s);
            }
        }
        let sample = StatisticSample::from_raw(StatKind::Wgplrt, h0, h1);
        let curve = roc(&sample);
        let thr = threshold_for_alpha(&sample, 0.1).unwrap();
        let u = transition_matrix(&sample, thr);
        println!(
            "nugget {nugget:>8.0e}: auc {:.4}  log gamma {:>9.3}  p01 {:.4} p10 {:.4}",
            curve.auc, -thr, u.p01, u.p10
        );
    }
    println!("paper:            auc ~0.93  log gamma   178.139  p01 0.1062 p10 0.1684");
}
