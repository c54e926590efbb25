//! Harness-level integration: decision modes, sweep trends, determinism.

use bsfr_core::calibration::TransitionMatrix;
use bsfr_core::harness::config::{
    BaselinesConfig, CalibrationConfig, DecisionMode, ExperimentConfig, GridConfig, NlrtConfig,
    Preset, SceneConfig, SensorPlacement, SpatialConfig, TemporalModelConfig, ThresholdConfig,
    TransitionsOverride,
};
use bsfr_core::harness::sweep::{sweep, SweepAxis};
use bsfr_core::harness::{run_pipeline, Algorithm};
use bsfr_core::kernel::CovKernel;
use bsfr_core::nlrt::SummaryStat;
use bsfr_core::warp::WarpSpec;

/// A small scene that exercises both sensor types quickly.
fn small_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        scene: SceneConfig {
            grid: GridConfig { nx: 12, ny: 12, xmin: -3.0, xmax: 3.0, ymin: -3.0, ymax: 3.0 },
            sensors: SensorPlacement::RandomGrid { count: 40, p_fraction: 0.5 },
            spatial: SpatialConfig {
                kernel: CovKernel::squared_exponential(1.0, 0.8).unwrap(),
                mean: 0.0,
                nugget: 0.0,
                threshold: ThresholdConfig::Pi(0.5),
            },
            h0: TemporalModelConfig {
                kernel: CovKernel::matern12(1.0, 1.0).unwrap(),
                warp: WarpSpec::TukeyGh { g: 0.1, h: 0.4, loc: 1.0, scale: 1.0 },
            },
            h1: TemporalModelConfig {
                kernel: CovKernel::matern52(1.0, 1.0).unwrap(),
                warp: WarpSpec::TukeyGh { g: 0.1, h: 0.4, loc: 1.0, scale: 1.0 },
            },
            horizon: 20.0,
            m_points: 30,
            k_intervals: 20,
            sigma_p: 0.1,
            sigma_i: 0.1,
            quad_substeps: 10,
        },
        alpha: 0.1,
        calibration: CalibrationConfig { r: 1500 },
        nlrt: NlrtConfig { j: 2000, ..NlrtConfig::default() },
        realizations: 12,
        baselines: BaselinesConfig { oracle: true, knn: true },
        decision_mode: DecisionMode::Lrt,
        transitions: None,
        knn_grid: vec![1, 3, 5, 7],
        output_dir: None,
    }
}

#[test]
fn perfect_channels_on_an_all_ones_field_reconstruct_exactly() {
    let mut config = small_config(3);
    config.scene.spatial.threshold = ThresholdConfig::C(-1e30);
    config.decision_mode = DecisionMode::Channel;
    config.transitions = Some(TransitionsOverride {
        p: TransitionMatrix::perfect(),
        i: TransitionMatrix::perfect(),
    });
    config.baselines = BaselinesConfig { oracle: false, knn: false };
    config.realizations = 3;

    let (_, output) = run_pipeline(config).unwrap();
    let sblue = output.metrics.iter().find(|r| r.algorithm == Algorithm::Sblue).unwrap();
    assert_eq!(sblue.mse, 0.0, "all-ones field must be recovered exactly");
    assert_eq!(sblue.f1, 1.0);
}

#[test]
fn channel_mode_with_noisy_channels_is_consistent_with_the_matrices() {
    let mut config = small_config(4);
    config.decision_mode = DecisionMode::Channel;
    config.transitions = Some(TransitionsOverride {
        p: TransitionMatrix::from_error_rates(0.1, 0.15),
        i: TransitionMatrix::from_error_rates(0.1, 0.15),
    });
    config.baselines = BaselinesConfig { oracle: true, knn: false };
    config.realizations = 20;
    let (_, output) = run_pipeline(config).unwrap();
    let sblue = output.metrics.iter().find(|r| r.algorithm == Algorithm::Sblue).unwrap();
    let oracle = output.metrics.iter().find(|r| r.algorithm == Algorithm::Oracle).unwrap();
    // The oracle sees the latent field; fusion from noisy bits can't win.
    assert!(oracle.mse <= sblue.mse + 1e-12);
    assert!(sblue.mse < 0.5, "fusion should beat coin flipping, mse {}", sblue.mse);
}

#[test]
fn noise_sweep_trends() {
    let mut config = small_config(5);
    config.realizations = 12;
    let values = [0.5, 0.2, 0.1, 0.02];
    let rows = sweep(&config, SweepAxis::NoiseSigma, &values).unwrap();

    let series = |metric: &str| -> Vec<f64> {
        values
            .iter()
            .map(|&v| {
                rows.iter()
                    .find(|r| r.axis_value == v && r.metric == metric)
                    .unwrap_or_else(|| panic!("row {metric} at {v}"))
                    .mean
            })
            .collect()
    };

    // FPR pinned near alpha throughout; TPR improves as noise shrinks.
    for fpr in series("sblue_fpr") {
        assert!((fpr - 0.1).abs() < 0.08, "sensor-level alpha control leaked: fpr {fpr}");
    }
    let tpr = series("sblue_tpr");
    assert!(
        tpr.last().unwrap() > tpr.first().unwrap(),
        "tpr should improve from σ=0.5 to σ=0.02: {tpr:?}"
    );
    for w in tpr.windows(2) {
        assert!(w[1] >= w[0] - 0.05, "tpr trend broke: {tpr:?}");
    }
    // Test-level AUCs improve too.
    let auc = series("wgplrt_auc");
    assert!(auc.last().unwrap() > auc.first().unwrap(), "wgplrt auc trend: {auc:?}");
}

#[test]
fn alpha_sweep_is_u_shaped() {
    let mut config = small_config(6);
    config.realizations = 40;
    let values = [0.02, 0.05, 0.1, 0.2, 0.35, 0.6];
    let rows = sweep(&config, SweepAxis::Alpha, &values).unwrap();
    let mse: Vec<f64> = values
        .iter()
        .map(|&v| {
            rows.iter()
                .find(|r| r.axis_value == v && r.metric == "sblue_mse")
                .unwrap()
                .mean
        })
        .collect();
    let argmin = mse
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!(
        argmin != 0 && argmin != mse.len() - 1,
        "mse over alpha should dip in the interior: {mse:?}"
    );
}

#[test]
fn m_points_sweep_reports_auc() {
    let mut config = small_config(7);
    config.calibration.r = 600;
    let rows = sweep(&config, SweepAxis::MPoints, &[10.0, 40.0]).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.metric, "wgplrt_auc");
        assert!(r.mean > 0.5 && r.mean <= 1.0);
    }
    assert!(rows[1].mean > rows[0].mean, "more observations should help: {rows:?}");
}

#[test]
fn pipeline_reruns_are_bit_identical_across_thread_counts() {
    let mut config = small_config(8);
    config.realizations = 5;
    let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let run = |pool: &rayon::ThreadPool, cfg: ExperimentConfig| {
        pool.install(|| {
            let (_, output) = run_pipeline(cfg).unwrap();
            bsfr_core::harness::pipeline::metrics_csv(&output.metrics)
        })
    };
    let a = run(&pool1, config.clone());
    let b = run(&pool4, config);
    assert_eq!(a, b);
}

#[test]
fn lrt_decisions_outperform_chance_end_to_end() {
    let config = small_config(9);
    let (pipeline, output) = run_pipeline(config).unwrap();
    let sblue = output.metrics.iter().find(|r| r.algorithm == Algorithm::Sblue).unwrap();
    // Calibration succeeded for both kinds and fed plausible channels.
    let up = pipeline.cal_p.as_ref().unwrap().transition_matrix;
    let ui = pipeline.cal_i.as_ref().unwrap().transition_matrix;
    assert!((up.p01 - 0.1).abs() < 0.05);
    assert!((ui.p01 - 0.1).abs() < 0.05);
    assert!(up.p11 > 0.5 && ui.p11 > 0.5);
    assert!(sblue.mse < 0.45);
}

#[test]
fn preset_works_with_transition_override_without_calibration() {
    let mut config = Preset::Exp2Sensitivity.config(2);
    config.realizations = 2;
    config.decision_mode = DecisionMode::Channel;
    config.transitions = Some(TransitionsOverride {
        p: TransitionMatrix::from_error_rates(0.1062, 0.1684),
        i: TransitionMatrix::from_error_rates(0.1038, 0.1468),
    });
    config.baselines = BaselinesConfig { oracle: false, knn: false };
    let (pipeline, output) = run_pipeline(config).unwrap();
    // No calibration artifacts were needed or produced.
    assert!(pipeline.cal_p.is_none() && pipeline.cal_i.is_none());
    let sblue = output.metrics.iter().find(|r| r.algorithm == Algorithm::Sblue).unwrap();
    assert!(sblue.mse < 0.5);
}
