//! The `plan`, `validate` and `metrics` subcommands as library functions.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use scc_core::collision::ScenarioChecker;
use scc_core::metrics::{
    brier_score, class_iou, mean_iou, monte_carlo_validate, nll, pixel_accuracy, reliability, LabeledRaster,
    ValidationConfig, ViolationReport,
};
use scc_core::occupancy::{ensemble_fuse, OccupancyError, OccupancyField, PredictionStack, RasterField};
use scc_core::planner::{interpolate_path, plan, Path as PlanPath, PathResult, TrackingErrorModel};
use scc_core::rng::stream_rng;
use scc_core::velocity::{schedule, time_parameterize, Trajectory, VelocityProfile};
use scc_core::TaskPose;
use serde::{Deserialize, Serialize};

use crate::bench::{read_rows, write_rows};
use crate::scene::Scene;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct PlanOutputs {
    pub result: PathResult,
    pub path: PlanPath,
    pub profile: VelocityProfile,
    pub trajectory: Trajectory,
}

/// plan, resample to `scene.k` poses, schedule at `scene.l + 1` samples and
/// time-parameterize. `field` defaults to the scene's analytic field.
pub fn plan_scene(scene: &Scene, field: Option<&dyn OccupancyField>, seed: u64) -> Result<PlanOutputs, CliError> {
    let analytic;
    let field: &dyn OccupancyField = match field {
        Some(f) => f,
        None => {
            analytic = scene.analytic_field(None)?;
            &analytic
        }
    };
    let cfg = scc_core::planner::PlannerConfig {
        seed,
        ..scene.planner.clone()
    };
    let mut rng = stream_rng(seed, 1);
    let checker = ScenarioChecker::new(field, cfg.sample_region(scene.robot), cfg.safety_config(), &mut rng)
        .map_err(|e| CliError::Invalid {
            field: "planner".into(),
            msg: e.to_string(),
        })?;
    let result = plan(&scene.bounds, &scene.start, &scene.goal, &cfg, &checker)?;
    let path = interpolate_path(&result, scene.k)?;
    let profile = schedule(field, &path, &scene.robot, &scene.schedule_config(), scene.l)?;
    let trajectory = time_parameterize(&path, &profile)?;
    Ok(PlanOutputs {
        result,
        path,
        profile,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRow {
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub s: f64,
    pub v: f64,
    pub d_o: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub v: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn pose_rows(poses: &[TaskPose]) -> Vec<PoseRow> {
    poses
        .iter()
        .enumerate()
        .map(|(index, p)| PoseRow {
            index,
            x: p.x.x,
            y: p.x.y,
            z: p.x.z,
            yaw: p.phi,
        })
        .collect()
}

/// Writes `result.json`, `waypoints.csv`, `path.csv`, `profile.csv` and
/// `trajectory.csv`.
pub fn write_plan_outputs(out: &PlanOutputs, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let json = dir.join("result.json");
    serde_json::to_writer_pretty(create(&json)?, &out.result).map_err(|e| CliError::io(&json, e))?;
    write_rows(create(&dir.join("waypoints.csv"))?, &pose_rows(&out.result.poses))?;
    write_rows(create(&dir.join("path.csv"))?, &pose_rows(out.path.poses()))?;
    let p = &out.profile;
    let profile: Vec<ProfileRow> = (0..p.s.len())
        .map(|i| ProfileRow {
            s: p.s[i],
            v: p.v[i],
            d_o: p.d_o[i],
            violation: p.violations.contains(&i),
        })
        .collect();
    write_rows(create(&dir.join("profile.csv"))?, &profile)?;
    write_rows(create(&dir.join("trajectory.csv"))?, &knot_rows(&out.trajectory))?;
    Ok(())
}

pub fn knot_rows(tr: &Trajectory) -> Vec<KnotRow> {
    (0..tr.t.len())
        .map(|i| KnotRow {
            t: tr.t[i],
            x: tr.poses[i].x.x,
            y: tr.poses[i].x.y,
            z: tr.poses[i].x.z,
            yaw: tr.poses[i].phi,
            v: tr.v[i],
        })
        .collect()
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let rows: Vec<KnotRow> = read_rows(f).map_err(|e| e.in_file(path))?;
    if rows.is_empty() {
        return Err(CliError::Invalid {
            field: "trajectory".into(),
            msg: "no knots".into(),
        }
        .in_file(path));
    }
    Ok(Trajectory {
        t: rows.iter().map(|r| r.t).collect(),
        poses: rows.iter().map(|r| TaskPose::from_xyz_yaw(r.x, r.y, r.z, r.yaw)).collect(),
        v: rows.iter().map(|r| r.v).collect(),
    })
}

/// `gamma` with every knot's error multiplied by `scale`.
pub fn scaled_model(gamma: &TrackingErrorModel, scale: f64) -> Result<TrackingErrorModel, CliError> {
    TrackingErrorModel::piecewise(gamma.knots().iter().map(|&(v, g)| (v, g * scale)).collect()).map_err(|e| {
        CliError::Invalid {
            field: "gamma_scale".into(),
            msg: e.to_string(),
        }
    })
}

pub fn validate_trajectory(
    scene: &Scene,
    field: Option<&dyn OccupancyField>,
    trajectory: &Trajectory,
    gamma_scale: f64,
    cfg: &ValidationConfig,
) -> Result<ViolationReport, CliError> {
    let analytic;
    let field: &dyn OccupancyField = match field {
        Some(f) => f,
        None => {
            analytic = scene.analytic_field(None)?;
            &analytic
        }
    };
    let gamma = scaled_model(&scene.planner.gamma_tilde, gamma_scale)?;
    Ok(monte_carlo_validate(field, trajectory, &scene.robot, &gamma, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub name: String,
    pub cells: usize,
    pub pixel_accuracy: f64,
    pub mean_iou: f64,
    pub iou_obstacle: f64,
    pub iou_free: f64,
    /// Classes absent from both prediction and truth (their IoU is 1).
    pub absent_classes: String,
    pub brier: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub name: String,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Truth raster values are labels: 1 free, 0 obstacle.
pub fn labels_from_raster(truth: &RasterField) -> Result<Vec<u8>, CliError> {
    truth
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            v if v == 0.0 => Ok(0),
            v if v == 1.0 => Ok(1),
            v => Err(CliError::Invalid {
                field: format!("truth[{i}]"),
                msg: format!("label must be 0 or 1, got {v}"),
            }),
        })
        .collect()
}

fn same_grid(a: &RasterField, b: &RasterField) -> bool {
    a.dims() == b.dims() && a.origin() == b.origin() && a.cell_size() == b.cell_size()
}

/// One metrics row per member plus the ensemble mean, and the matching
/// reliability bins.
pub fn evaluate_predictions(
    members: Vec<RasterField>,
    truth: &RasterField,
) -> Result<(Vec<MetricsRow>, Vec<ReliabilityRow>), CliError> {
    let labels = labels_from_raster(truth)?;
    if let Some((i, _)) = members.iter().enumerate().find(|(_, m)| !same_grid(m, truth)) {
        return Err(OccupancyError::DimMismatch(format!("member {i} does not match the truth grid")).into());
    }
    let stack = PredictionStack::new(members)?;
    let fused = ensemble_fuse(&stack);
    let mut named: Vec<(String, &RasterField)> = stack
        .members()
        .iter()
        .enumerate()
        .map(|(i, m)| (format!("member_{i}"), m))
        .collect();
    named.push(("ensemble".into(), &fused));

    let mut metrics = Vec::new();
    let mut bins = Vec::new();
    for (name, r) in named {
        let lr = LabeledRaster::new(r.values().iter().map(|&v| f64::from(v)).collect(), labels.clone())?;
        let [obs, free] = class_iou(&lr);
        let absent: Vec<&str> = [(obs.absent, "obstacle"), (free.absent, "free")]
            .iter()
            .filter(|(a, _)| *a)
            .map(|(_, n)| *n)
            .collect();
        metrics.push(MetricsRow {
            name: name.clone(),
            cells: lr.len(),
            pixel_accuracy: pixel_accuracy(&lr),
            mean_iou: mean_iou(&lr),
            iou_obstacle: obs.iou,
            iou_free: free.iou,
            absent_classes: absent.join(";"),
            brier: brier_score(&lr),
            nll: nll(&lr),
        });
        for (bin, b) in reliability(&lr).bins.into_iter().enumerate() {
            bins.push(ReliabilityRow {
                name: name.clone(),
                bin,
                lower: b.lower,
                upper: b.upper,
                count: b.count,
                mean_confidence: b.mean_confidence,
                accuracy: b.accuracy,
            });
        }
    }
    Ok((metrics, bins))
}
