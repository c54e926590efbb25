//! Declarative experiment configuration and the named presets.

use serde::{Deserialize, Serialize};

use crate::calibration::TransitionMatrix;
use crate::error::{Error, Result};
use crate::field::{linspace, Loc, SensorScene, TemporalModel};
use crate::kernel::CovKernel;
use crate::nlrt::{Distance, SummaryStat};
use crate::rng::RngStream;
use crate::warp::{Affine, BernoulliThreshold, WarpSpec};

// Fixed stream keys so every pipeline phase draws from its own lane.
pub(crate) const STREAM_PLACEMENT: u64 = 0x01;
pub(crate) const STREAM_CALIBRATION: u64 = 0x02;
pub(crate) const STREAM_BANKS: u64 = 0x03;
pub(crate) const STREAM_REALIZE: u64 = 0x04;
pub(crate) const STREAM_CHANNEL: u64 = 0x05;

/// The stream feeding realization `r` of a run with this seed (shared by
/// `simulate` and the batch pipeline so exports line up).
pub fn realization_stream(seed: u64, r: u64) -> RngStream {
    RngStream::new(seed, 0).substream(STREAM_REALIZE).substream(r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl GridConfig {
    pub fn points(&self) -> Vec<Loc> {
        let xs = linspace(self.xmin, self.xmax, self.nx);
        let ys = linspace(self.ymin, self.ymax, self.ny);
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for &x in &xs {
            for &y in &ys {
                out.push([x, y]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorPlacement {
    /// Sample `count` distinct grid points; the first `⌈count·p_fraction⌉`
    /// become P-sensors, the rest I-sensors.
    RandomGrid { count: usize, p_fraction: f64 },
    /// Explicit coordinates.
    Explicit { p: Vec<Loc>, i: Vec<Loc> },
    /// Load locations from a CSV of `x,y` rows (header optional).
    Csv { path: String, types: SensorTypes },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SensorTypes {
    AllP,
    AllI,
    /// Even rows become P-sensors, odd rows I-sensors.
    Alternating,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdConfig {
    /// Marginal P(y = 1) for a standardized field.
    Pi(f64),
    /// Threshold constant directly.
    C(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialConfig {
    pub kernel: CovKernel,
    pub mean: f64,
    #[serde(default)]
    pub nugget: f64,
    pub threshold: ThresholdConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalModelConfig {
    pub kernel: CovKernel,
    pub warp: WarpSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub grid: GridConfig,
    pub sensors: SensorPlacement,
    pub spatial: SpatialConfig,
    pub h0: TemporalModelConfig,
    pub h1: TemporalModelConfig,
    pub horizon: f64,
    pub m_points: usize,
    pub k_intervals: usize,
    pub sigma_p: f64,
    pub sigma_i: f64,
    #[serde(default = "default_substeps")]
    pub quad_substeps: usize,
}

fn default_substeps() -> usize {
    50
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub r: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { r: 10_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlrtConfig {
    pub j: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub summary: SummaryStat,
    #[serde(default)]
    pub distance: Distance,
    #[serde(default)]
    pub standardize: bool,
}

impl Default for NlrtConfig {
    fn default() -> Self {
        Self {
            j: 10_000,
            delta: 0.1,
            epsilon: 0.1,
            summary: SummaryStat::Acf { lags: vec![1, 2, 3, 4] },
            distance: Distance::Euclidean,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselinesConfig {
    pub oracle: bool,
    pub knn: bool,
}

impl Default for BaselinesConfig {
    fn default() -> Self {
        Self { oracle: true, knn: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    /// Run the per-sensor likelihood-ratio tests on simulated observations.
    #[default]
    Lrt,
    /// Transmit the true labels through the transition matrices instead
    /// (isolates the fusion stage).
    Channel,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionsOverride {
    pub p: TransitionMatrix,
    pub i: TransitionMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub alpha: f64,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub nlrt: NlrtConfig,
    pub realizations: usize,
    #[serde(default)]
    pub baselines: BaselinesConfig,
    #[serde(default)]
    pub decision_mode: DecisionMode,
    /// Fixed channels; skips using the calibrated ones for fusion.
    #[serde(default)]
    pub transitions: Option<TransitionsOverride>,
    /// KNN cross-validation grid (odd neighbor counts).
    #[serde(default = "default_knn_grid")]
    pub knn_grid: Vec<usize>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_knn_grid() -> Vec<usize> {
    vec![1, 3, 5, 7, 9, 11, 13, 15]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidConfig("realizations must be >= 1".into()));
        }
        if self.knn_grid.is_empty() || self.knn_grid.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::InvalidConfig("knn grid must contain odd positive values".into()));
        }
        Ok(())
    }

    /// Materialize the scene: grid, seeded sensor placement, models.
    pub fn build_scene(&self) -> Result<SensorScene> {
        let grid = self.scene.grid.points();
        let (p_sensors, i_sensors) = self.place_sensors(&grid)?;

        let threshold = match self.scene.spatial.threshold {
            ThresholdConfig::Pi(pi) => BernoulliThreshold::from_pi(pi)?,
            ThresholdConfig::C(c) => BernoulliThreshold::from_c(c),
        };
        let scene = SensorScene {
            grid,
            p_sensors,
            i_sensors,
            spatial_kernel: self.scene.spatial.kernel,
            spatial_mean: self.scene.spatial.mean,
            spatial_nugget: self.scene.spatial.nugget,
            threshold,
            h0: TemporalModel::new(self.scene.h0.kernel, self.scene.h0.warp)?,
            h1: TemporalModel::new(self.scene.h1.kernel, self.scene.h1.warp)?,
            horizon: self.scene.horizon,
            m_points: self.scene.m_points,
            k_intervals: self.scene.k_intervals,
            sigma_p: self.scene.sigma_p,
            sigma_i: self.scene.sigma_i,
            quad_substeps: self.scene.quad_substeps,
        };
        scene.validate()?;
        Ok(scene)
    }

    fn place_sensors(&self, grid: &[Loc]) -> Result<(Vec<Loc>, Vec<Loc>)> {
        match &self.scene.sensors {
            SensorPlacement::RandomGrid { count, p_fraction } => {
                if *count == 0 || *count > grid.len() {
                    return Err(Error::InvalidConfig(format!(
                        "cannot place {count} sensors on a {}-point grid",
                        grid.len()
                    )));
                }
                if !(0.0..=1.0).contains(p_fraction) {
                    return Err(Error::InvalidConfig("p_fraction must be in [0,1]".into()));
                }
                // Partial Fisher-Yates over the grid indices.
                let mut rng = RngStream::new(self.seed, 0).substream(STREAM_PLACEMENT).rng();
                let mut indices: Vec<usize> = (0..grid.len()).collect();
                for i in 0..*count {
                    let j = i + rand::Rng::random_range(&mut rng, 0..indices.len() - i);
                    indices.swap(i, j);
                }
                let chosen = &indices[..*count];
                let n_p = (*count as f64 * p_fraction).round() as usize;
                let p = chosen[..n_p].iter().map(|&i| grid[i]).collect();
                let i_ = chosen[n_p..].iter().map(|&i| grid[i]).collect();
                Ok((p, i_))
            }
            SensorPlacement::Explicit { p, i } => Ok((p.clone(), i.clone())),
            SensorPlacement::Csv { path, types } => {
                let text = std::fs::read_to_string(path)?;
                let locs = parse_locations_csv(&text)?;
                Ok(split_by_type(locs, *types))
            }
        }
    }
}

pub fn parse_locations_csv(text: &str) -> Result<Vec<Loc>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::InvalidConfig(format!("line {}: expected x,y", lineno + 1)));
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => out.push([x, y]),
            _ if lineno == 0 => continue, // header row
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "line {}: non-numeric coordinates",
                    lineno + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("no sensor locations in csv".into()));
    }
    Ok(out)
}

fn split_by_type(locs: Vec<Loc>, types: SensorTypes) -> (Vec<Loc>, Vec<Loc>) {
    match types {
        SensorTypes::AllP => (locs, Vec::new()),
        SensorTypes::AllI => (Vec::new(), locs),
        SensorTypes::Alternating => {
            let mut p = Vec::new();
            let mut i = Vec::new();
            for (idx, loc) in locs.into_iter().enumerate() {
                if idx % 2 == 0 {
                    p.push(loc);
                } else {
                    i.push(loc);
                }
            }
            (p, i)
        }
    }
}

/// Named presets expanding to the published parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Exp1Synthetic,
    Exp2Sensitivity,
    NeaFitted,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "exp1_synthetic" => Ok(Preset::Exp1Synthetic),
            "exp2_sensitivity" => Ok(Preset::Exp2Sensitivity),
            "nea_fitted" => Ok(Preset::NeaFitted),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset '{other}' (expected exp1_synthetic, exp2_sensitivity, nea_fitted)"
            ))),
        }
    }

    pub fn config(self, seed: u64) -> ExperimentConfig {
        match self {
            Preset::Exp1Synthetic => synthetic_config(seed, 100),
            Preset::Exp2Sensitivity => synthetic_config(seed, 20),
            Preset::NeaFitted => nea_config(seed),
        }
    }
}

fn synthetic_config(seed: u64, realizations: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        scene: SceneConfig {
            grid: GridConfig { nx: 50, ny: 50, xmin: -5.0, xmax: 5.0, ymin: -5.0, ymax: 5.0 },
            sensors: SensorPlacement::RandomGrid { count: 250, p_fraction: 0.5 },
            spatial: SpatialConfig {
                kernel: CovKernel::squared_exponential(1.0, 0.5).unwrap(),
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
            m_points: 50,
            k_intervals: 50,
            sigma_p: 0.1,
            sigma_i: 0.1,
            quad_substeps: 50,
        },
        alpha: 0.1,
        calibration: CalibrationConfig { r: 10_000 },
        nlrt: NlrtConfig::default(),
        realizations,
        baselines: BaselinesConfig::default(),
        decision_mode: DecisionMode::Lrt,
        transitions: None,
        knn_grid: default_knn_grid(),
        output_dir: None,
    }
}

/// Illustrative station layout over the island (the true station
/// coordinates are not published as numbers; these are placeholders with a
/// comparable spatial spread).
pub const NEA_STATIONS: [Loc; 21] = [
    [103.6650, 1.2960],
    [103.6830, 1.3520],
    [103.7060, 1.4180],
    [103.7210, 1.2800],
    [103.7430, 1.3360],
    [103.7600, 1.4100],
    [103.7760, 1.3000],
    [103.7900, 1.3640],
    [103.8050, 1.4330],
    [103.8190, 1.2680],
    [103.8330, 1.3250],
    [103.8490, 1.3890],
    [103.8650, 1.4480],
    [103.8790, 1.3050],
    [103.8930, 1.3600],
    [103.9110, 1.4210],
    [103.9260, 1.3180],
    [103.9400, 1.3750],
    [103.9600, 1.3400],
    [103.9780, 1.3930],
    [103.9900, 1.3100],
];

fn nea_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        scene: SceneConfig {
            grid: GridConfig {
                nx: 50,
                ny: 50,
                xmin: 103.60,
                xmax: 104.06,
                ymin: 1.19,
                ymax: 1.50,
            },
            sensors: SensorPlacement::Explicit { p: NEA_STATIONS.to_vec(), i: Vec::new() },
            spatial: SpatialConfig {
                kernel: CovKernel::matern52(5.3068, 0.0344).unwrap(),
                mean: 75.0566,
                nugget: 0.1,
                threshold: ThresholdConfig::C(75.3692),
            },
            h0: TemporalModelConfig {
                kernel: CovKernel::matern52(1.0, 3.7622).unwrap(),
                warp: WarpSpec::Gamma {
                    shape: 53.7457,
                    scale: 0.1771,
                    post: Affine { c0: 10.0, c1: -1.0 },
                },
            },
            h1: TemporalModelConfig {
                kernel: CovKernel::matern52(1.0, 4.0654).unwrap(),
                warp: WarpSpec::Gamma {
                    shape: 43.3694,
                    scale: 0.2417,
                    post: Affine { c0: 10.0, c1: -1.0 },
                },
            },
            horizon: 133.0,
            m_points: 133,
            k_intervals: 1,
            sigma_p: 0.1,
            sigma_i: 0.1,
            quad_substeps: 2,
        },
        alpha: 0.1,
        calibration: CalibrationConfig { r: 10_000 },
        nlrt: NlrtConfig::default(),
        realizations: 100,
        baselines: BaselinesConfig::default(),
        decision_mode: DecisionMode::Lrt,
        transitions: None,
        knn_grid: default_knn_grid(),
        output_dir: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_expand_to_published_parameters() {
        let cfg = Preset::Exp1Synthetic.config(1);
        assert_eq!(cfg.realizations, 100);
        assert_eq!(cfg.scene.m_points, 50);
        assert_eq!(cfg.scene.k_intervals, 50);
        assert_eq!(cfg.scene.sigma_p, 0.1);
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.nlrt.j, 10_000);
        assert_eq!(cfg.nlrt.delta, 0.1);
        assert_eq!(cfg.nlrt.epsilon, 0.1);
        let scene = cfg.build_scene().unwrap();
        assert_eq!(scene.grid.len(), 2500);
        assert_eq!(scene.p_sensors.len(), 125);
        assert_eq!(scene.i_sensors.len(), 125);

        let nea = Preset::NeaFitted.config(1);
        assert_eq!(nea.scene.m_points, 133);
        assert_eq!(nea.scene.horizon, 133.0);
        let scene = nea.build_scene().unwrap();
        assert_eq!(scene.p_sensors.len(), 21);
        assert!(scene.i_sensors.is_empty());
        assert!((scene.threshold.c - 75.3692).abs() < 1e-12);
    }

    #[test]
    fn placement_is_seed_deterministic_and_distinct() {
        let cfg = Preset::Exp1Synthetic.config(7);
        let a = cfg.build_scene().unwrap();
        let b = cfg.build_scene().unwrap();
        assert_eq!(a.p_sensors, b.p_sensors);
        assert_eq!(a.i_sensors, b.i_sensors);

        let mut all = a.sensor_locations();
        let before = all.len();
        all.sort_by(|u, v| u.partial_cmp(v).unwrap());
        all.dedup();
        assert_eq!(all.len(), before, "sensor placement must not repeat grid points");

        let other = Preset::Exp1Synthetic.config(8).build_scene().unwrap();
        assert_ne!(a.p_sensors, other.p_sensors);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = Preset::Exp1Synthetic.config(1);
        let mut value = serde_json::to_value(&cfg).unwrap();
        value["surprise"] = serde_json::json!(1);
        let text = serde_json::to_string(&value).unwrap();
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = Preset::NeaFitted.config(3);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.seed, 3);
        assert_eq!(back.scene.m_points, 133);
    }

    #[test]
    fn csv_locations_parse_with_and_without_header() {
        let locs = parse_locations_csv("x,y\n1.0,2.0\n3.0,4.0\n").unwrap();
        assert_eq!(locs, vec![[1.0, 2.0], [3.0, 4.0]]);
        let locs = parse_locations_csv("1.0,2.0\n").unwrap();
        assert_eq!(locs.len(), 1);
        assert!(parse_locations_csv("a,b\nc,d\n").is_err());
    }
}
