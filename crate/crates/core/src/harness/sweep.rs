//! Parameter sweeps: re-run calibration and the pipeline (or an ROC-only
//! reduction for the test-level sweeps) over a list of values and emit a
//! tidy table.

use rayon::prelude::*;

use crate::calibration::{
    roc, sample_nlrt_statistics, sample_wgplrt_statistics, threshold_for_alpha,
    transition_matrix, StatisticSample, WgplrtTest,
};
use crate::error::{Error, Result};
use crate::field::{IntegralSampler, PointSampler, SensorScene};
use crate::harness::config::{ExperimentConfig, STREAM_BANKS, STREAM_CALIBRATION, STREAM_REALIZE};
use crate::harness::metrics::{mean_stderr, Algorithm, ConfusionCounts};
use crate::harness::output::{csv_table, fmt_float, line_plot_svg};
use crate::harness::pipeline::{run_pipeline, Pipeline};
use crate::nlrt::{build_bank_with, NlrtTest};
use crate::rng::RngStream;
use crate::sblue::{sblue_offline, SpatialField};
use crate::wgplrt::laplace_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Joint observation noise level σ_P = σ_I (full pipeline per value).
    NoiseSigma,
    /// Number of integral intervals (NLRT ROC only).
    KIntervals,
    /// Number of point-observation times (WGPLRT ROC only).
    MPoints,
    /// Significance level (re-threshold, re-fuse; no re-simulation).
    Alpha,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "noise_sigma" => Ok(SweepAxis::NoiseSigma),
            "k_intervals" => Ok(SweepAxis::KIntervals),
            "m_points" => Ok(SweepAxis::MPoints),
            "alpha" => Ok(SweepAxis::Alpha),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis '{other}' (expected noise_sigma, k_intervals, m_points, alpha)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::NoiseSigma => "noise_sigma",
            SweepAxis::KIntervals => "k_intervals",
            SweepAxis::MPoints => "m_points",
            SweepAxis::Alpha => "alpha",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub axis_value: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
}

pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    match axis {
        SweepAxis::NoiseSigma => sweep_noise(config, values),
        SweepAxis::KIntervals => sweep_k_intervals(config, values),
        SweepAxis::MPoints => sweep_m_points(config, values),
        SweepAxis::Alpha => sweep_alpha(config, values),
    }
}

fn metric_rows(
    axis_value: f64,
    algorithm: Algorithm,
    counts: &[ConfusionCounts],
    out: &mut Vec<SweepRow>,
) {
    let name = algorithm.name().to_lowercase();
    for (metric, f) in [
        ("mse", ConfusionCounts::mse as fn(&ConfusionCounts) -> f64),
        ("f1", ConfusionCounts::f1),
        ("fpr", ConfusionCounts::fpr),
        ("tpr", ConfusionCounts::tpr),
    ] {
        let values: Vec<f64> = counts.iter().map(f).collect();
        let (mean, stderr) = mean_stderr(&values);
        out.push(SweepRow { axis_value, metric: format!("{name}_{metric}"), mean, stderr });
    }
}

fn sweep_noise(config: &ExperimentConfig, values: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &sigma in values {
        if !(sigma > 0.0) {
            return Err(Error::InvalidConfig("noise sweep values must be positive".into()));
        }
        let mut cfg = config.clone();
        cfg.scene.sigma_p = sigma;
        cfg.scene.sigma_i = sigma;
        let (pipeline, output) = run_pipeline(cfg)?;
        let sblue: Vec<_> = output.per_realization.iter().map(|c| c.sblue).collect();
        metric_rows(sigma, Algorithm::Sblue, &sblue, &mut rows);
        if config.baselines.oracle {
            let counts: Vec<_> = output.per_realization.iter().filter_map(|c| c.oracle).collect();
            metric_rows(sigma, Algorithm::Oracle, &counts, &mut rows);
        }
        if config.baselines.knn {
            let counts: Vec<_> = output.per_realization.iter().filter_map(|c| c.knn).collect();
            metric_rows(sigma, Algorithm::Knn, &counts, &mut rows);
        }
        if let Some(cal) = &pipeline.cal_p {
            rows.push(SweepRow {
                axis_value: sigma,
                metric: "wgplrt_auc".into(),
                mean: cal.auc,
                stderr: 0.0,
            });
        }
        if let Some(cal) = &pipeline.cal_i {
            rows.push(SweepRow {
                axis_value: sigma,
                metric: "nlrt_auc".into(),
                mean: cal.auc,
                stderr: 0.0,
            });
        }
    }
    Ok(rows)
}

/// NLRT ROC for one interval count, sharing nothing but the scene models.
pub fn nlrt_statistics_for_k(
    config: &ExperimentConfig,
    scene: &SensorScene,
    k_intervals: usize,
    r: usize,
) -> Result<StatisticSample> {
    let root = RngStream::new(config.seed, 0);
    let mk = |model| {
        IntegralSampler::new(model, k_intervals, scene.horizon, scene.sigma_i, scene.quad_substeps)
    };
    let s0 = mk(&scene.h0)?;
    let s1 = mk(&scene.h1)?;
    let bank_stream = root.substream(STREAM_BANKS).substream(k_intervals as u64);
    let (bank0, bank1) = rayon::join(
        || build_bank_with(&s0, 0, config.nlrt.j, &config.nlrt.summary, &bank_stream.substream(0)),
        || build_bank_with(&s1, 1, config.nlrt.j, &config.nlrt.summary, &bank_stream.substream(1)),
    );
    let test = NlrtTest::new(
        bank0?,
        bank1?,
        config.nlrt.summary.clone(),
        config.nlrt.distance,
        config.nlrt.delta,
        config.nlrt.epsilon,
        config.nlrt.standardize,
    )?;
    sample_nlrt_statistics(
        &test,
        [&s0, &s1],
        r,
        &root.substream(STREAM_CALIBRATION).substream(k_intervals as u64),
    )
}

fn sweep_k_intervals(config: &ExperimentConfig, values: &[f64]) -> Result<Vec<SweepRow>> {
    let scene = config.build_scene()?;
    let mut rows = Vec::new();
    for &value in values {
        let k = value as usize;
        if k == 0 || (k as f64 - value).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("k_intervals must be a positive integer, got {value}")));
        }
        let sample = nlrt_statistics_for_k(config, &scene, k, config.calibration.r)?;
        rows.push(SweepRow {
            axis_value: value,
            metric: "nlrt_auc".into(),
            mean: roc(&sample).auc,
            stderr: 0.0,
        });
    }
    Ok(rows)
}

fn sweep_m_points(config: &ExperimentConfig, values: &[f64]) -> Result<Vec<SweepRow>> {
    let scene = config.build_scene()?;
    let root = RngStream::new(config.seed, 0);
    let mut rows = Vec::new();
    for &value in values {
        let m = value as usize;
        if m == 0 || (m as f64 - value).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("m_points must be a positive integer, got {value}")));
        }
        let times = crate::field::linspace(0.0, scene.horizon, m);
        let test = WgplrtTest {
            cache0: laplace_fit(&scene.h0, &times, scene.sigma_p)?,
            cache1: laplace_fit(&scene.h1, &times, scene.sigma_p)?,
        };
        let s0 = PointSampler::new(&scene.h0, &times, scene.sigma_p)?;
        let s1 = PointSampler::new(&scene.h1, &times, scene.sigma_p)?;
        let sample = sample_wgplrt_statistics(
            &test,
            [&s0, &s1],
            config.calibration.r,
            &root.substream(STREAM_CALIBRATION).substream(m as u64),
        )?;
        rows.push(SweepRow {
            axis_value: value,
            metric: "wgplrt_auc".into(),
            mean: roc(&sample).auc,
            stderr: 0.0,
        });
    }
    Ok(rows)
}

fn sweep_alpha(config: &ExperimentConfig, values: &[f64]) -> Result<Vec<SweepRow>> {
    let pipeline = Pipeline::prepare(config.clone())?;
    let root = RngStream::new(config.seed, 0);

    // Simulate once; each alpha only re-thresholds and re-fuses.
    let realizations: Result<Vec<_>> = (0..config.realizations)
        .into_par_iter()
        .map(|r| {
            let stream = root.substream(STREAM_REALIZE).substream(r as u64);
            let realization = pipeline.sim.realize(&stream);
            let stats = pipeline.sensor_statistics(&realization)?;
            let truth: Vec<u8> = pipeline.query_idx.iter().map(|&i| realization.y[i]).collect();
            Ok((stats, truth))
        })
        .collect();
    let realizations = realizations?;

    let field = SpatialField {
        kernel: pipeline.scene.spatial_kernel,
        mean: pipeline.scene.spatial_mean,
        nugget: pipeline.scene.spatial_nugget,
    };
    let sensors = pipeline.scene.sensor_locations();
    let query_points: Vec<_> = pipeline.query_idx.iter().map(|&i| pipeline.scene.grid[i]).collect();

    let mut rows = Vec::new();
    for &alpha in values {
        let (p_thr, u_p) = match &pipeline.sample_p {
            Some(sample) => {
                let t = threshold_for_alpha(sample, alpha)?;
                (t, transition_matrix(sample, t))
            }
            None => (f64::INFINITY, crate::calibration::TransitionMatrix::perfect()),
        };
        let (i_thr, u_i) = match &pipeline.sample_i {
            Some(sample) => {
                let t = threshold_for_alpha(sample, alpha)?;
                (t, transition_matrix(sample, t))
            }
            None => (0.0, crate::calibration::TransitionMatrix::perfect()),
        };
        let mut transitions = vec![u_p; pipeline.scene.p_sensors.len()];
        transitions.extend(vec![u_i; pipeline.scene.i_sensors.len()]);
        let sblue =
            sblue_offline(&sensors, &query_points, &field, pipeline.scene.threshold.c, &transitions)?;

        let counts: Vec<ConfusionCounts> = realizations
            .iter()
            .map(|((p_stats, i_stats), truth)| {
                let decisions = pipeline.decide_from_statistics(p_stats, i_stats, p_thr, i_thr);
                let pred = sblue.predict(&decisions)?;
                Ok(ConfusionCounts::from_pairs(truth, &pred.y_hat))
            })
            .collect::<Result<_>>()?;
        metric_rows(alpha, Algorithm::Sblue, &counts, &mut rows);
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![fmt_float(r.axis_value), r.metric.clone(), fmt_float(r.mean), fmt_float(r.stderr)]
        })
        .collect();
    csv_table("axis_value,metric,mean,stderr", &body)
}

pub fn sweep_svg(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut metric_names: Vec<String> = rows.iter().map(|r| r.metric.clone()).collect();
    metric_names.sort();
    metric_names.dedup();
    let series: Vec<(String, Vec<(f64, f64)>)> = metric_names
        .into_iter()
        .map(|name| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.metric == name)
                .map(|r| (r.axis_value, r.mean))
                .collect();
            (name, pts)
        })
        .collect();
    line_plot_svg("parameter sweep", axis.name(), "metric", &series)
}
