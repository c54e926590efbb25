//! End-to-end batch runs: calibrate, simulate, test, fuse, score.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    roc, sample_nlrt_statistics, sample_wgplrt_statistics, threshold_for_alpha,
    transition_matrix, StatKind, StatisticSample, TransitionMatrix, WgplrtTest,
};
use crate::error::{Error, Result};
use crate::field::{Realization, SceneSimulator, SensorScene};
use crate::harness::baselines::{KnnBaseline, OracleBaseline};
use crate::harness::config::{
    DecisionMode, ExperimentConfig, STREAM_BANKS, STREAM_CALIBRATION, STREAM_CHANNEL,
    STREAM_REALIZE,
};
use crate::harness::metrics::{average_rows, Algorithm, ConfusionCounts, MetricsRow};
use crate::harness::output::{csv_table, field_csv, fmt_float, heatmap_svg, line_plot_svg, write_text};
use crate::nlrt::{build_bank_with, NlrtTest};
use crate::rng::RngStream;
use crate::sblue::{sblue_offline, Prediction, SBlueOffline, SpatialField};

/// Persisted calibration result for one test kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub kind: StatKind,
    pub r: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Decision threshold in statistic space.
    pub threshold: f64,
    /// The equivalent `log γ` (`−threshold` for the point test whose rule is
    /// `stat > −log γ`; `ln threshold` for the integral test).
    pub log_gamma: f64,
    pub transition_matrix: TransitionMatrix,
    pub auc: f64,
    pub roc_points: Vec<(f64, f64)>,
}

fn calibration_artifact(
    sample: &StatisticSample,
    alpha: f64,
    r: usize,
    seed: u64,
) -> Result<CalibrationArtifact> {
    let threshold = threshold_for_alpha(sample, alpha)?;
    let transition = transition_matrix(sample, threshold);
    let curve = roc(sample);
    let log_gamma = match sample.kind {
        StatKind::Wgplrt => -threshold,
        StatKind::Nlrt => threshold.ln(),
    };
    Ok(CalibrationArtifact {
        kind: sample.kind,
        r,
        seed,
        alpha,
        threshold,
        log_gamma,
        transition_matrix: transition,
        auc: curve.auc,
        roc_points: curve.points,
    })
}

/// A fully prepared experiment: scene factorizations, fitted tests,
/// calibration, fusion weights, baselines.
pub struct Pipeline {
    pub config: ExperimentConfig,
    pub scene: SensorScene,
    pub sim: SceneSimulator,
    /// Grid indices held out for scoring (never sensor locations).
    pub query_idx: Vec<usize>,
    pub wgplrt: Option<WgplrtTest>,
    pub nlrt: Option<NlrtTest>,
    pub cal_p: Option<CalibrationArtifact>,
    pub cal_i: Option<CalibrationArtifact>,
    /// Raw calibration draws, kept so other significance levels can be
    /// re-thresholded without re-simulation.
    pub sample_p: Option<StatisticSample>,
    pub sample_i: Option<StatisticSample>,
    /// One channel per sensor (P-sensors first), as used by the fusion step.
    pub transitions: Vec<TransitionMatrix>,
    pub sblue: SBlueOffline,
    pub oracle: Option<OracleBaseline>,
    pub knn: Option<KnnBaseline>,
}

/// Scores of one realization, per algorithm.
#[derive(Debug, Clone, Copy)]
pub struct RealizationCounts {
    pub sblue: ConfusionCounts,
    pub oracle: Option<ConfusionCounts>,
    pub knn: Option<ConfusionCounts>,
}

pub struct RunOutput {
    pub metrics: Vec<MetricsRow>,
    pub per_realization: Vec<RealizationCounts>,
    /// The first realization and its reconstruction, for field artifacts.
    pub first: (Realization, Prediction),
}

impl Pipeline {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scene = config.build_scene()?;
        let sim = SceneSimulator::new(&scene)?;
        let root = RngStream::new(config.seed, 0);

        // Held-out query points: grid minus exact sensor locations.
        let sensor_keys: std::collections::HashSet<[u64; 2]> = scene
            .sensor_locations()
            .iter()
            .map(|p| [p[0].to_bits(), p[1].to_bits()])
            .collect();
        let query_idx: Vec<usize> = scene
            .grid
            .iter()
            .enumerate()
            .filter(|(_, p)| !sensor_keys.contains(&[p[0].to_bits(), p[1].to_bits()]))
            .map(|(i, _)| i)
            .collect();
        if query_idx.is_empty() {
            return Err(Error::InvalidConfig("no held-out grid points left to score".into()));
        }

        let needs_tests = config.decision_mode == DecisionMode::Lrt;
        let needs_calibration = needs_tests || config.transitions.is_none();

        let cal_stream = root.substream(STREAM_CALIBRATION);
        let bank_stream = root.substream(STREAM_BANKS);

        let mut wgplrt = None;
        let mut cal_p = None;
        let mut sample_p = None;
        if !scene.p_sensors.is_empty() && needs_calibration {
            let test = WgplrtTest::fit(&scene)?;
            let sample = sample_wgplrt_statistics(
                &test,
                [sim.point_sampler(0), sim.point_sampler(1)],
                config.calibration.r,
                &cal_stream.substream(0),
            )?;
            cal_p = Some(calibration_artifact(
                &sample,
                config.alpha,
                config.calibration.r,
                config.seed,
            )?);
            sample_p = Some(sample);
            wgplrt = Some(test);
        }

        let mut nlrt = None;
        let mut cal_i = None;
        let mut sample_i = None;
        if !scene.i_sensors.is_empty() && needs_calibration {
            let s0 = sim.integral_sampler(0).expect("integral sensors present");
            let s1 = sim.integral_sampler(1).expect("integral sensors present");
            let bank0 = build_bank_with(
                s0,
                0,
                config.nlrt.j,
                &config.nlrt.summary,
                &bank_stream.substream(0),
            )?;
            let bank1 = build_bank_with(
                s1,
                1,
                config.nlrt.j,
                &config.nlrt.summary,
                &bank_stream.substream(1),
            )?;
            let test = NlrtTest::new(
                bank0,
                bank1,
                config.nlrt.summary.clone(),
                config.nlrt.distance,
                config.nlrt.delta,
                config.nlrt.epsilon,
                config.nlrt.standardize,
            )?;
            let sample = sample_nlrt_statistics(
                &test,
                [s0, s1],
                config.calibration.r,
                &cal_stream.substream(1),
            )?;
            cal_i = Some(calibration_artifact(
                &sample,
                config.alpha,
                config.calibration.r,
                config.seed,
            )?);
            sample_i = Some(sample);
            nlrt = Some(test);
        }

        // Channels for fusion: explicit override wins over calibration.
        let (u_p, u_i) = match (&config.transitions, &cal_p, &cal_i) {
            (Some(over), _, _) => (over.p, over.i),
            (None, p, i) => (
                p.as_ref().map(|c| c.transition_matrix).unwrap_or_else(TransitionMatrix::perfect),
                i.as_ref().map(|c| c.transition_matrix).unwrap_or_else(TransitionMatrix::perfect),
            ),
        };
        let mut transitions = vec![u_p; scene.p_sensors.len()];
        transitions.extend(vec![u_i; scene.i_sensors.len()]);

        let field = SpatialField {
            kernel: scene.spatial_kernel,
            mean: scene.spatial_mean,
            nugget: scene.spatial_nugget,
        };
        let query_points: Vec<_> = query_idx.iter().map(|&i| scene.grid[i]).collect();
        let sensors = scene.sensor_locations();
        let sblue = sblue_offline(&sensors, &query_points, &field, scene.threshold.c, &transitions)?;

        let oracle = if config.baselines.oracle {
            Some(OracleBaseline::new(
                &sensors,
                &query_points,
                &scene.spatial_kernel,
                scene.spatial_mean,
                scene.threshold.c,
            )?)
        } else {
            None
        };
        let knn = if config.baselines.knn {
            Some(KnnBaseline::new(&sensors, &query_points, &config.knn_grid, config.seed))
        } else {
            None
        };

        Ok(Self {
            config,
            scene,
            sim,
            query_idx,
            wgplrt,
            nlrt,
            cal_p,
            cal_i,
            sample_p,
            sample_i,
            transitions,
            sblue,
            oracle,
            knn,
        })
    }

    fn root(&self) -> RngStream {
        RngStream::new(self.config.seed, 0)
    }

    /// Per-sensor test statistics for one realization (P-sensors, then
    /// I-sensors).
    pub fn sensor_statistics(&self, realization: &Realization) -> Result<(Vec<f64>, Vec<f64>)> {
        let p_stats = match &self.wgplrt {
            Some(test) => {
                realization.point_obs.iter().map(|z| test.statistic(z)).collect()
            }
            None => Vec::new(),
        };
        let i_stats = match &self.nlrt {
            Some(test) => realization
                .integral_obs
                .iter()
                .map(|z| test.statistic(z))
                .collect::<Result<Vec<f64>>>()?,
            None => Vec::new(),
        };
        Ok((p_stats, i_stats))
    }

    /// Decisions from statistics at the given statistic-space thresholds.
    pub fn decide_from_statistics(
        &self,
        p_stats: &[f64],
        i_stats: &[f64],
        p_threshold: f64,
        i_threshold: f64,
    ) -> Vec<u8> {
        let mut out = Vec::with_capacity(p_stats.len() + i_stats.len());
        out.extend(p_stats.iter().map(|&s| StatKind::Wgplrt.decide(s, p_threshold)));
        out.extend(i_stats.iter().map(|&s| StatKind::Nlrt.decide(s, i_threshold)));
        out
    }

    /// The decision vector of one realization under the configured mode.
    pub fn decisions(&self, realization: &Realization, r_index: u64) -> Result<Vec<u8>> {
        match self.config.decision_mode {
            DecisionMode::Lrt => {
                let (p_stats, i_stats) = self.sensor_statistics(realization)?;
                let p_thr = self.cal_p.as_ref().map(|c| c.threshold).unwrap_or(f64::INFINITY);
                let i_thr = self.cal_i.as_ref().map(|c| c.threshold).unwrap_or(0.0);
                Ok(self.decide_from_statistics(&p_stats, &i_stats, p_thr, i_thr))
            }
            DecisionMode::Channel => {
                let mut rng =
                    self.root().substream(STREAM_CHANNEL).substream(r_index).rng();
                Ok(realization
                    .y_sensors()
                    .iter()
                    .zip(&self.transitions)
                    .map(|(&y, u)| u.transmit(y, &mut rng))
                    .collect())
            }
        }
    }

    fn truth_at_query(&self, realization: &Realization) -> Vec<u8> {
        self.query_idx.iter().map(|&i| realization.y[i]).collect()
    }

    /// Simulate, decide, fuse, and score one realization.
    pub fn run_realization(&self, r_index: u64) -> Result<(RealizationCounts, Realization, Prediction)> {
        let stream = self.root().substream(STREAM_REALIZE).substream(r_index);
        let realization = self.sim.realize(&stream);
        let truth = self.truth_at_query(&realization);

        let decisions = self.decisions(&realization, r_index)?;
        let prediction = self.sblue.predict(&decisions)?;
        let sblue = ConfusionCounts::from_pairs(&truth, &prediction.y_hat);

        let oracle = self.oracle.as_ref().map(|o| {
            let pred = o.predict(realization.g_sensors());
            ConfusionCounts::from_pairs(&truth, &pred)
        });
        let knn = self.knn.as_ref().map(|k| {
            let (_, pred) = k.predict(&decisions);
            ConfusionCounts::from_pairs(&truth, &pred)
        });

        Ok((RealizationCounts { sblue, oracle, knn }, realization, prediction))
    }

    /// The full batch: every realization in its own stream, averaged rows.
    pub fn run(&self) -> Result<RunOutput> {
        let n = self.config.realizations;
        let results: Result<Vec<_>> = (0..n)
            .into_par_iter()
            .map(|r| {
                let (counts, realization, prediction) = self.run_realization(r as u64)?;
                // Only the first realization's fields are kept for artifacts.
                Ok((counts, if r == 0 { Some((realization, prediction)) } else { None }))
            })
            .collect();
        let results = results?;

        let per_realization: Vec<RealizationCounts> = results.iter().map(|(c, _)| *c).collect();
        let first = results
            .into_iter()
            .find_map(|(_, f)| f)
            .expect("at least one realization");

        if per_realization
            .iter()
            .any(|c| c.sblue.tp + c.sblue.fp == 0 || c.sblue.tp + c.sblue.fn_ == 0)
        {
            eprintln!("warning: degenerate F1 (no positives) in at least one realization");
        }

        let mut metrics =
            vec![average_rows(Algorithm::Sblue, &per_realization.iter().map(|c| c.sblue).collect::<Vec<_>>())];
        if self.config.baselines.oracle {
            let counts: Vec<_> = per_realization.iter().filter_map(|c| c.oracle).collect();
            metrics.push(average_rows(Algorithm::Oracle, &counts));
        }
        if self.config.baselines.knn {
            let counts: Vec<_> = per_realization.iter().filter_map(|c| c.knn).collect();
            metrics.push(average_rows(Algorithm::Knn, &counts));
        }

        Ok(RunOutput { metrics, per_realization, first })
    }

    /// Write the standard artifact set for a completed run.
    pub fn write_artifacts(&self, output: &RunOutput, out_dir: &Path) -> Result<()> {
        write_text(&out_dir.join("metrics.csv"), &metrics_csv(&output.metrics))?;

        let calibrations: Vec<&CalibrationArtifact> =
            self.cal_p.iter().chain(self.cal_i.iter()).collect();
        if !calibrations.is_empty() {
            write_text(
                &out_dir.join("calibration.json"),
                &serde_json::to_string_pretty(&calibrations)?,
            )?;
            write_text(&out_dir.join("roc.csv"), &roc_csv(&calibrations))?;
            let series: Vec<(String, Vec<(f64, f64)>)> = calibrations
                .iter()
                .map(|c| (format!("{:?} (AUC {:.3})", c.kind, c.auc), c.roc_points.clone()))
                .collect();
            write_text(
                &out_dir.join("roc.svg"),
                &line_plot_svg("ROC", "false positive rate", "true positive rate", &series),
            )?;
        }

        let (realization, prediction) = &output.first;
        write_text(
            &out_dir.join("field_true.csv"),
            &field_csv(&self.scene.grid, realization.y_grid().iter().map(|&b| f64::from(b))),
        )?;
        let query_points: Vec<_> = self.query_idx.iter().map(|&i| self.scene.grid[i]).collect();
        write_text(
            &out_dir.join("field_pred.csv"),
            &field_csv(&query_points, prediction.y_hat.iter().map(|&b| f64::from(b))),
        )?;
        write_text(
            &out_dir.join("risk.csv"),
            &field_csv(&query_points, self.sblue.bayes_risk.iter().copied()),
        )?;

        // Heatmaps over the full grid; monitored cells carry the truth in
        // the prediction map and zero risk.
        let (nx, ny) = (self.config.scene.grid.nx, self.config.scene.grid.ny);
        let truth: Vec<f64> = realization.y_grid().iter().map(|&b| f64::from(b)).collect();
        write_text(&out_dir.join("field_true.svg"), &heatmap_svg("true field", nx, ny, &truth))?;
        let mut pred_full = truth.clone();
        let mut risk_full = vec![0.0; self.scene.grid.len()];
        for (slot, &gi) in self.query_idx.iter().enumerate() {
            pred_full[gi] = f64::from(prediction.y_hat[slot]);
            risk_full[gi] = self.sblue.bayes_risk[slot];
        }
        write_text(
            &out_dir.join("field_pred.svg"),
            &heatmap_svg("reconstructed field", nx, ny, &pred_full),
        )?;
        write_text(&out_dir.join("risk.svg"), &heatmap_svg("bayes risk", nx, ny, &risk_full))?;
        Ok(())
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.algorithm.name().to_string(),
                r.realizations.to_string(),
                fmt_float(r.mse),
                fmt_float(r.f1),
                fmt_float(r.fpr),
                fmt_float(r.tpr),
            ]
        })
        .collect();
    csv_table("algorithm,realizations,mse,f1,fpr,tpr", &body)
}

fn roc_csv(calibrations: &[&CalibrationArtifact]) -> String {
    let mut rows = Vec::new();
    for cal in calibrations {
        let kind = match cal.kind {
            StatKind::Wgplrt => "wgplrt",
            StatKind::Nlrt => "nlrt",
        };
        for &(fpr, tpr) in &cal.roc_points {
            rows.push(vec![kind.to_string(), fmt_float(fpr), fmt_float(tpr)]);
        }
    }
    csv_table("kind,fpr,tpr", &rows)
}

/// Convenience wrapper: prepare and run in one call.
pub fn run_pipeline(config: ExperimentConfig) -> Result<(Pipeline, RunOutput)> {
    let pipeline = Pipeline::prepare(config)?;
    let output = pipeline.run()?;
    Ok((pipeline, output))
}
