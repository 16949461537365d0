use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scc_cli::bench::{run_benchmark, write_rows};
use scc_cli::commands::{
    evaluate_predictions, plan_scene, read_trajectory, validate_trajectory, write_plan_outputs,
};
use scc_cli::{exit, BenchmarkSpec, CliError, Scene};
use scc_core::metrics::ValidationConfig;
use scc_core::occupancy::{OccupancyField, RasterField};

#[derive(Parser)]
#[command(name = "scc", version, about = "Scenario chance-constrained planning and benchmarks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Master seed
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Inflate each segment's sample region to cover the gaps between poses
    #[arg(long, global = true)]
    continuous_cover: bool,
    /// Reuse one scenario set for every pose check
    #[arg(long, global = true)]
    shared_scenarios: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan, schedule velocities and write path, profile and trajectory files
    Plan {
        #[arg(long)]
        scene: PathBuf,
        /// Plan on a raster field instead of the scene's analytic obstacles
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Run a benchmark campaign and write raw and summary CSVs
    Benchmark {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Monte-Carlo check of a planned trajectory
    Validate {
        #[arg(long)]
        scene: PathBuf,
        /// Defaults to <out-dir>/trajectory.csv
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        points_per_knot: usize,
        /// Maximum tolerated violation fraction
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
        /// Multiplies the tracking error bound used for the perturbations
        #[arg(long, default_value_t = 1.0)]
        gamma_scale: f64,
    },
    /// Segmentation and calibration metrics for member predictions and their ensemble
    Metrics {
        #[arg(long, required = true, num_args = 1..)]
        pred: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
    },
}

fn load_scene(path: &Path, common: &Common) -> Result<Scene, CliError> {
    let mut scene = Scene::load(path)?;
    scene.planner.continuous_cover |= common.continuous_cover;
    scene.planner.shared_scenarios |= common.shared_scenarios;
    Ok(scene)
}

fn load_field(path: &Option<PathBuf>) -> Result<Option<RasterField>, CliError> {
    path.as_ref()
        .map(|p| RasterField::load(p).map_err(|e| CliError::from(e).in_file(p)))
        .transpose()
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    match &cli.cmd {
        Cmd::Plan { scene, field } => {
            let scene = load_scene(scene, c)?;
            let raster = load_field(field)?;
            let out = plan_scene(&scene, raster.as_ref().map(|r| r as &dyn OccupancyField), c.seed)?;
            write_plan_outputs(&out, &c.out_dir)?;
            println!(
                "planned {} waypoints, cost {:.6}, duration {:.3} s",
                out.result.poses.len(),
                out.result.cost,
                out.trajectory.duration()
            );
            if !out.profile.violations.is_empty() {
                eprintln!(
                    "warning: {} profile samples lack clearance for the planning inflation",
                    out.profile.violations.len()
                );
            }
        }
        Cmd::Benchmark { spec } => {
            let mut spec = BenchmarkSpec::load(spec)?;
            spec.scene.planner.continuous_cover |= c.continuous_cover;
            spec.scene.planner.shared_scenarios |= c.shared_scenarios;
            let out = run_benchmark(&spec, c.seed)?;
            ensure_dir(&c.out_dir)?;
            write_rows(create(&c.out_dir.join("benchmark_raw.csv"))?, &out.rows)?;
            write_rows(create(&c.out_dir.join("benchmark_summary.csv"))?, &out.summary)?;
            for s in &out.summary {
                println!(
                    "{:<18} {:>8} ok {:>4}/{:<4} normalized {:>8} time {:.4} s",
                    s.method,
                    s.sweep,
                    s.successes,
                    s.runs,
                    s.normalized_mean.map_or("-".into(), |v| format!("{v:.4}")),
                    s.mean_plan_time_s
                );
            }
        }
        Cmd::Validate {
            scene,
            trajectory,
            field,
            trials,
            points_per_knot,
            threshold,
            gamma_scale,
        } => {
            let scene = load_scene(scene, c)?;
            let raster = load_field(field)?;
            let tpath = trajectory.clone().unwrap_or_else(|| c.out_dir.join("trajectory.csv"));
            let tr = read_trajectory(&tpath)?;
            let cfg = ValidationConfig {
                delta: scene.planner.delta,
                n_trials: *trials,
                points_per_knot: *points_per_knot,
                seed: c.seed,
            };
            let rep = validate_trajectory(
                &scene,
                raster.as_ref().map(|r| r as &dyn OccupancyField),
                &tr,
                *gamma_scale,
                &cfg,
            )?;
            println!(
                "samples {} violations {} fraction {:.6} failed trials {}",
                rep.samples, rep.violations, rep.fraction, rep.failed_trials
            );
            if rep.fraction > *threshold {
                return Err(CliError::ValidationFailed {
                    fraction: rep.fraction,
                    threshold: *threshold,
                });
            }
        }
        Cmd::Metrics { pred, truth } => {
            let truth_raster = RasterField::load(truth).map_err(|e| CliError::from(e).in_file(truth))?;
            let members = pred
                .iter()
                .map(|p| RasterField::load(p).map_err(|e| CliError::from(e).in_file(p)))
                .collect::<Result<Vec<_>, _>>()?;
            let (rows, bins) = evaluate_predictions(members, &truth_raster)?;
            ensure_dir(&c.out_dir)?;
            write_rows(create(&c.out_dir.join("metrics.csv"))?, &rows)?;
            write_rows(create(&c.out_dir.join("reliability.csv"))?, &bins)?;
            for r in &rows {
                println!(
                    "{:<10} PA {:.4} mIoU {:.4} BS {:.4} NLL {:.4}",
                    r.name, r.pixel_accuracy, r.mean_iou, r.brier, r.nll
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.common.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(exit::FAILURE as u8);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
