//! Development probe: calibrate both tests at the synthetic-experiment
//! settings and print the thresholds and transition matrices.

use bsfr_core::calibration::{
    roc, sample_nlrt_statistics, sample_wgplrt_statistics, threshold_for_alpha,
    transition_matrix, WgplrtTest,
};
use bsfr_core::field::SceneSimulator;
use bsfr_core::harness::config::Preset;
use bsfr_core::nlrt::{build_bank_with, NlrtTest};
use bsfr_core::rng::RngStream;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let r: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let j: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(10_000);

    let config = Preset::Exp1Synthetic.config(1);
    let scene = config.build_scene().unwrap();
    let sim = SceneSimulator::new(&scene).unwrap();
    let root = RngStream::new(1, 0);

    let t0 = std::time::Instant::now();
    let test = WgplrtTest::fit(&scene).unwrap();
    println!("laplace fits: {:?}", t0.elapsed());
    println!(
        "H0 vhat range [{:.4}, {:.4}], q {:.4}; H1 vhat range [{:.4}, {:.4}], q {:.4}",
        test.cache0.v_hat.min(),
        test.cache0.v_hat.max(),
        test.cache0.q_at_vhat,
        test.cache1.v_hat.min(),
        test.cache1.v_hat.max(),
        test.cache1.q_at_vhat,
    );

    let t0 = std::time::Instant::now();
    let sample = sample_wgplrt_statistics(
        &test,
        [sim.point_sampler(0), sim.point_sampler(1)],
        r,
        &root.substream(100),
    )
    .unwrap();
    println!("wgplrt stats ({r} draws): {:?}", t0.elapsed());
    let thr = threshold_for_alpha(&sample, 0.1).unwrap();
    let u = transition_matrix(&sample, thr);
    let curve = roc(&sample);
    println!(
        "WGPLRT: h0 stat range [{:.2}, {:.2}] median {:.2}; h1 median {:.2}",
        sample.under_h0.first().unwrap(),
        sample.under_h0.last().unwrap(),
        sample.under_h0[r / 2],
        sample.under_h1[r / 2],
    );
    println!(
        "WGPLRT: threshold {thr:.4} -> log gamma_p {:.4}; U = [[{:.4},{:.4}],[{:.4},{:.4}]] auc {:.4}",
        -thr, u.p00, u.p01, u.p10, u.p11, curve.auc
    );
    println!("  paper: log gamma_p 178.1392, U = [[0.8938,0.1062],[0.1684,0.8316]]");

    let t0 = std::time::Instant::now();
    let s0 = sim.integral_sampler(0).unwrap();
    let s1 = sim.integral_sampler(1).unwrap();
    let bank0 = build_bank_with(s0, 0, j, &config.nlrt.summary, &root.substream(200)).unwrap();
    let bank1 = build_bank_with(s1, 1, j, &config.nlrt.summary, &root.substream(201)).unwrap();
    println!("banks ({j} draws each): {:?}", t0.elapsed());
    let nlrt = NlrtTest::new(
        bank0,
        bank1,
        config.nlrt.summary.clone(),
        config.nlrt.distance,
        config.nlrt.delta,
        config.nlrt.epsilon,
        false,
    )
    .unwrap();
    let t0 = std::time::Instant::now();
    let sample = sample_nlrt_statistics(&nlrt, [s0, s1], r, &root.substream(300)).unwrap();
    println!("nlrt stats ({r} draws): {:?}", t0.elapsed());
    let thr = threshold_for_alpha(&sample, 0.1).unwrap();
    let u = transition_matrix(&sample, thr);
    let curve = roc(&sample);
    println!(
        "NLRT: h0 stat median {:.4}, h1 median {:.4}; threshold {thr:.4} -> log gamma_i {:.4}; U = [[{:.4},{:.4}],[{:.4},{:.4}]] auc {:.4}",
        sample.under_h0[r / 2],
        sample.under_h1[r / 2],
        thr.ln(),
        u.p00,
        u.p01,
        u.p10,
        u.p11,
        curve.auc
    );
    println!("  paper: log gamma_i -0.4659, U = [[0.8962,0.1038],[0.1468,0.8532]]");
}
