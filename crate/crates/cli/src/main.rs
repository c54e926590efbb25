//! Batch command-line front end for the field-reconstruction experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bsfr_core::error::Error;
use bsfr_core::harness::config::{realization_stream, ExperimentConfig, Preset};
use bsfr_core::harness::output::{csv_table, field_csv, fmt_float, write_text};
use bsfr_core::harness::pipeline::Pipeline;
use bsfr_core::harness::sweep::{sweep, sweep_csv, sweep_svg, SweepAxis};

#[derive(Parser)]
#[command(
    name = "bsfr",
    about = "Reconstruct a binary spatial field from compressed sensor time series",
    version
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset instead of a config file.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the tests and calibrate thresholds and transition matrices.
    Calibrate,
    /// Draw one realization of the scene and export it.
    Simulate,
    /// Fuse a decision vector into a field reconstruction.
    Reconstruct {
        /// CSV of `sensor_id,bit` rows.
        #[arg(long)]
        decisions: PathBuf,
    },
    /// Compute ROC curves for the calibrated tests.
    Roc,
    /// Run the full experiment and report averaged metrics.
    Experiment,
    /// Sweep one parameter axis, rerunning calibration per value.
    Sweep {
        /// One of: noise_sigma, k_intervals, m_points, alpha.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::Io(_) | Error::Json(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: failed to configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match (&common.config, &common.preset) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig("pass either --config or --preset, not both".into()))
        }
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(name)) => Preset::parse(name)?.config(common.seed.unwrap_or(1)),
        (None, None) => {
            return Err(Error::InvalidConfig("a --config file or --preset is required".into()))
        }
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = load_config(&cli.common)?;
    let out: &Path = &cli.common.out;

    match &cli.command {
        Command::Calibrate | Command::Roc => {
            let pipeline = Pipeline::prepare(config)?;
            let calibrations: Vec<_> =
                pipeline.cal_p.iter().chain(pipeline.cal_i.iter()).collect();
            if calibrations.is_empty() {
                return Err(Error::InvalidConfig(
                    "nothing to calibrate: no sensors or calibration disabled".into(),
                ));
            }
            write_text(
                &out.join("calibration.json"),
                &serde_json::to_string_pretty(&calibrations)?,
            )?;
            let mut rows = Vec::new();
            for cal in &calibrations {
                for &(fpr, tpr) in &cal.roc_points {
                    rows.push(vec![
                        format!("{:?}", cal.kind).to_lowercase(),
                        fmt_float(fpr),
                        fmt_float(tpr),
                    ]);
                }
            }
            write_text(&out.join("roc.csv"), &csv_table("kind,fpr,tpr", &rows))?;
            let series: Vec<(String, Vec<(f64, f64)>)> = calibrations
                .iter()
                .map(|c| (format!("{:?} (AUC {:.3})", c.kind, c.auc), c.roc_points.clone()))
                .collect();
            write_text(
                &out.join("roc.svg"),
                &bsfr_core::harness::output::line_plot_svg(
                    "ROC",
                    "false positive rate",
                    "true positive rate",
                    &series,
                ),
            )?;
            for cal in &calibrations {
                println!(
                    "{:?}: threshold {} (log gamma {}), p01 {:.4}, p10 {:.4}, auc {:.4}",
                    cal.kind,
                    fmt_float(cal.threshold),
                    fmt_float(cal.log_gamma),
                    cal.transition_matrix.p01,
                    cal.transition_matrix.p10,
                    cal.auc
                );
            }
            Ok(())
        }
        Command::Simulate => {
            let scene = config.build_scene()?;
            let sim = bsfr_core::field::SceneSimulator::new(&scene)?;
            let r = sim.realize(&realization_stream(config.seed, 0));

            let mut rows = Vec::new();
            let all_points: Vec<[f64; 2]> = scene
                .grid
                .iter()
                .chain(scene.p_sensors.iter())
                .chain(scene.i_sensors.iter())
                .copied()
                .collect();
            for (i, p) in all_points.iter().enumerate() {
                rows.push(vec![
                    fmt_float(p[0]),
                    fmt_float(p[1]),
                    fmt_float(r.g[i]),
                    r.y[i].to_string(),
                ]);
            }
            write_text(&out.join("field_true.csv"), &csv_table("x,y,g,y_label", &rows))?;

            let obs_rows = |obs: &[Vec<f64>]| {
                let mut rows = Vec::new();
                for (sensor, series) in obs.iter().enumerate() {
                    for (idx, v) in series.iter().enumerate() {
                        rows.push(vec![sensor.to_string(), idx.to_string(), fmt_float(*v)]);
                    }
                }
                rows
            };
            write_text(
                &out.join("point_obs.csv"),
                &csv_table("sensor_id,obs_index,value", &obs_rows(&r.point_obs)),
            )?;
            write_text(
                &out.join("integral_obs.csv"),
                &csv_table("sensor_id,obs_index,value", &obs_rows(&r.integral_obs)),
            )?;
            let sensor_rows: Vec<Vec<String>> = scene
                .p_sensors
                .iter()
                .map(|p| (p, "P"))
                .chain(scene.i_sensors.iter().map(|p| (p, "I")))
                .enumerate()
                .map(|(id, (p, ty))| {
                    vec![id.to_string(), fmt_float(p[0]), fmt_float(p[1]), ty.to_string()]
                })
                .collect();
            write_text(
                &out.join("sensors.csv"),
                &csv_table("sensor_id,x,y,type", &sensor_rows),
            )?;
            println!("wrote one realization to {}", out.display());
            Ok(())
        }
        Command::Reconstruct { decisions } => {
            let pipeline = Pipeline::prepare(config)?;
            let text = std::fs::read_to_string(decisions)?;
            let bits = parse_decisions_csv(&text, pipeline.scene.n_sensors())?;
            let prediction = pipeline.sblue.predict(&bits)?;
            let query_points: Vec<[f64; 2]> =
                pipeline.query_idx.iter().map(|&i| pipeline.scene.grid[i]).collect();
            write_text(
                &out.join("field_pred.csv"),
                &field_csv(&query_points, prediction.y_hat.iter().map(|&b| f64::from(b))),
            )?;
            write_text(
                &out.join("g_hat.csv"),
                &field_csv(&query_points, prediction.g_hat.iter().copied()),
            )?;
            write_text(
                &out.join("risk.csv"),
                &field_csv(&query_points, pipeline.sblue.bayes_risk.iter().copied()),
            )?;
            println!("reconstructed {} query points", query_points.len());
            Ok(())
        }
        Command::Experiment => {
            let pipeline = Pipeline::prepare(config)?;
            let output = pipeline.run()?;
            pipeline.write_artifacts(&output, out)?;
            for row in &output.metrics {
                println!(
                    "{:<6} mse {:.4} f1 {:.4} fpr {:.4} tpr {:.4} ({} realizations)",
                    row.algorithm.name(),
                    row.mse,
                    row.f1,
                    row.fpr,
                    row.tpr,
                    row.realizations
                );
            }
            Ok(())
        }
        Command::Sweep { axis, values } => {
            let axis = SweepAxis::parse(axis)?;
            let rows = sweep(&config, axis, values)?;
            write_text(&out.join("sweep.csv"), &sweep_csv(&rows))?;
            write_text(&out.join("sweep.svg"), &sweep_svg(axis, &rows))?;
            println!("wrote {} sweep rows to {}", rows.len(), out.display());
            Ok(())
        }
    }
}

fn parse_decisions_csv(text: &str, n_sensors: usize) -> Result<Vec<u8>, Error> {
    let mut bits = vec![None::<u8>; n_sensors];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::InvalidConfig(format!("line {}: expected sensor_id,bit", lineno + 1)));
        }
        match (fields[0].parse::<usize>(), fields[1].parse::<u8>()) {
            (Ok(id), Ok(bit @ (0 | 1))) => {
                if id >= n_sensors {
                    return Err(Error::InvalidConfig(format!(
                        "line {}: sensor id {id} out of range (scene has {n_sensors})",
                        lineno + 1
                    )));
                }
                bits[id] = Some(bit);
            }
            _ if lineno == 0 => continue, // header
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "line {}: expected numeric sensor_id and 0/1 bit",
                    lineno + 1
                )))
            }
        }
    }
    bits.into_iter()
        .enumerate()
        .map(|(id, b)| b.ok_or_else(|| Error::InvalidConfig(format!("missing decision for sensor {id}"))))
        .collect()
}
