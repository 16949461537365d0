//! Seeded benchmark campaigns over an uncertainty sweep or an obstacle-count
//! sweep, with raw and summary CSV output.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use scc_core::collision::{BaselineChecker, BaselineKind, GaussianScene, SafetyChecker, ScenarioChecker};
use scc_core::geometry::Shape;
use scc_core::metrics::{mean_std, path_cost};
use scc_core::occupancy::{AnalyticField, OccupancyField, RasterField};
use scc_core::planner::{interpolate_path, plan_timed, PlanError, PlannerConfig};
use scc_core::rng::stream_rng;
use scc_core::Vec3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scene::{BenchmarkSpec, SceneObstacle, SweepKind};
use crate::CliError;

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Scenario,
    Baseline(BaselineKind),
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Scenario,
        Method::Baseline(BaselineKind::BoundingVolume),
        Method::Baseline(BaselineKind::ChanceConstraint),
        Method::Baseline(BaselineKind::MaxProbability),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Scenario => "scenario",
            Method::Baseline(k) => k.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Seed for one benchmark run, from a hash of the master seed, method name,
/// sweep value and run index.
pub fn run_seed(master: u64, method: Method, sweep: f64, run: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(method.name().as_bytes());
    h.update(sweep.to_bits().to_le_bytes());
    h.update((run as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Seed for the random obstacle layout of one sweep value; shared by all
/// methods.
pub fn layout_seed(master: u64, sweep: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(b"layout");
    h.update(sweep.to_bits().to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    UnsafeStart,
    UnsafeGoal,
    NoPath,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub method: String,
    pub sweep: f64,
    pub run: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub cost: Option<f64>,
    pub normalized_cost: Option<f64>,
    pub plan_time_s: f64,
    pub check_time_s: f64,
    pub segment_checks: usize,
    pub tree_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub schema_version: u32,
    pub method: String,
    pub sweep: f64,
    pub runs: usize,
    pub successes: usize,
    pub mean_cost: Option<f64>,
    pub std_cost: Option<f64>,
    pub normalized_mean: Option<f64>,
    pub normalized_std: Option<f64>,
    pub mean_plan_time_s: f64,
    pub std_plan_time_s: f64,
    pub mean_check_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub rows: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Everything a run needs for one sweep value.
pub struct Cell {
    pub sweep: f64,
    pub field: Box<dyn OccupancyField>,
    pub gaussian: GaussianScene,
}

fn random_spheres(spec: &BenchmarkSpec, count: usize, seed: u64) -> Vec<SceneObstacle> {
    let r = spec.random_obstacles.expect("checked at load");
    let scene = &spec.scene;
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let b = &scene.bounds;
        let c = Vec3::new(
            rng.gen_range(b.min.x..b.max.x),
            rng.gen_range(b.min.y..b.max.y),
            rng.gen_range(b.min.z..b.max.z),
        );
        let keep_out = r.radius + r.clearance;
        if (c - scene.start.x).norm() < keep_out || (c - scene.goal.x).norm() < keep_out {
            continue;
        }
        out.push(SceneObstacle {
            shape: Shape::sphere(c, r.radius).expect("radius validated"),
            d_stop: Some(r.d_stop),
            sigma: Some(r.sigma),
        });
    }
    out
}

/// Builds the occupancy field and Gaussian scene for one sweep value.
pub fn build_cell(spec: &BenchmarkSpec, sweep: f64, master: u64) -> Result<Cell, CliError> {
    let delta = spec.scene.planner.delta;
    match spec.sweep {
        SweepKind::Uncertainty => Ok(Cell {
            sweep,
            field: Box::new(spec.scene.analytic_field(Some(sweep / (1.0 - delta)))?),
            gaussian: spec.scene.gaussian_scene(Some(sweep / 2.0))?,
        }),
        SweepKind::ObstacleCount => {
            let r = spec.random_obstacles.expect("checked at load");
            let mut scene = spec.scene.clone();
            scene.obstacles = random_spheres(spec, sweep as usize, layout_seed(master, sweep));
            let analytic: AnalyticField = scene.analytic_field(None)?;
            // constant-time lookups, so check cost does not grow with obstacles
            let raster: RasterField = analytic.rasterize(r.raster_cell)?;
            Ok(Cell {
                sweep,
                field: Box::new(raster),
                gaussian: scene.gaussian_scene(None)?,
            })
        }
    }
}

/// One planning run; never fails, errors become status rows.
pub fn run_one(spec: &BenchmarkSpec, cell: &Cell, method: Method, run: usize, seed: u64) -> RunRecord {
    let scene = &spec.scene;
    let cfg = PlannerConfig {
        seed,
        ..scene.planner.clone()
    };
    let region = cfg.sample_region(scene.robot);
    let mut record = RunRecord {
        schema_version: CSV_SCHEMA_VERSION,
        method: method.name().to_string(),
        sweep: cell.sweep,
        run,
        seed,
        status: RunStatus::Error,
        cost: None,
        normalized_cost: None,
        plan_time_s: 0.0,
        check_time_s: 0.0,
        segment_checks: 0,
        tree_size: 0,
    };
    let t0 = Instant::now();
    let outcome = match method {
        Method::Scenario => {
            let mut rng = stream_rng(seed, 1);
            match ScenarioChecker::new(cell.field.as_ref(), region, cfg.safety_config(), &mut rng) {
                Ok(chk) => plan_timed(&scene.bounds, &scene.start, &scene.goal, &cfg, &chk as &dyn SafetyChecker),
                Err(_) => return record,
            }
        }
        Method::Baseline(kind) => match BaselineChecker::new(kind, &cell.gaussian, region, cfg.safety_config()) {
            Ok(chk) => plan_timed(&scene.bounds, &scene.start, &scene.goal, &cfg, &chk as &dyn SafetyChecker),
            Err(_) => return record,
        },
    };
    record.plan_time_s = t0.elapsed().as_secs_f64();
    match outcome {
        Ok((res, stats)) => {
            record.check_time_s = stats.check_time.as_secs_f64();
            record.segment_checks = stats.segment_checks;
            record.tree_size = res.tree_size;
            match interpolate_path(&res, spec.k) {
                Ok(p) => {
                    record.cost = Some(path_cost(p.poses(), cfg.r));
                    record.status = RunStatus::Ok;
                }
                Err(_) => record.status = RunStatus::Error,
            }
        }
        Err(PlanError::UnsafeStart) => record.status = RunStatus::UnsafeStart,
        Err(PlanError::UnsafeGoal) => record.status = RunStatus::UnsafeGoal,
        Err(PlanError::NoPathFound { .. }) => record.status = RunStatus::NoPath,
        Err(_) => record.status = RunStatus::Error,
    }
    record
}

fn method_rank(name: &str) -> usize {
    Method::ALL.iter().position(|m| m.name() == name).unwrap_or(usize::MAX)
}

/// Fills `normalized_cost` and derives the per-cell summary. Cells are
/// ordered by method, then sweep value.
pub fn summarize(rows: &mut [RunRecord]) -> Vec<SummaryRow> {
    rows.sort_by(|a, b| {
        method_rank(&a.method)
            .cmp(&method_rank(&b.method))
            .then(a.sweep.total_cmp(&b.sweep))
            .then(a.run.cmp(&b.run))
    });
    let mut cells: Vec<(String, f64, Vec<usize>)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        match cells.last_mut() {
            Some((m, s, idx)) if *m == r.method && s.to_bits() == r.sweep.to_bits() => idx.push(i),
            _ => cells.push((r.method.clone(), r.sweep, vec![i])),
        }
    }
    let means: Vec<f64> = cells
        .iter()
        .map(|(_, _, idx)| {
            let costs: Vec<f64> = idx.iter().filter_map(|&i| rows[i].cost).collect();
            mean_std(&costs).0
        })
        .collect();
    let max = means.iter().copied().filter(|m| m.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    for r in rows.iter_mut() {
        r.normalized_cost = r.cost.map(|c| c / max);
    }
    cells
        .iter()
        .map(|(method, sweep, idx)| {
            let costs: Vec<f64> = idx.iter().filter_map(|&i| rows[i].cost).collect();
            let times: Vec<f64> = idx.iter().map(|&i| rows[i].plan_time_s).collect();
            let checks: Vec<f64> = idx.iter().map(|&i| rows[i].check_time_s).collect();
            let (mean, std) = mean_std(&costs);
            let (tm, ts) = mean_std(&times);
            let finite = |x: f64| x.is_finite().then_some(x);
            SummaryRow {
                schema_version: CSV_SCHEMA_VERSION,
                method: method.clone(),
                sweep: *sweep,
                runs: idx.len(),
                successes: costs.len(),
                mean_cost: finite(mean),
                std_cost: finite(std),
                normalized_mean: finite(mean / max),
                normalized_std: finite(std / max),
                mean_plan_time_s: tm,
                std_plan_time_s: ts,
                mean_check_time_s: mean_std(&checks).0,
            }
        })
        .collect()
}

/// Runs every (method, sweep value, run) job in the current rayon pool.
pub fn run_benchmark(spec: &BenchmarkSpec, master: u64) -> Result<BenchmarkOutput, CliError> {
    let cells = spec
        .values
        .iter()
        .map(|&v| build_cell(spec, v, master))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, Method, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| spec.methods.iter().flat_map(move |&m| (0..spec.runs).map(move |r| (ci, m, r))))
        .collect();
    let mut rows: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(ci, m, r)| {
            let cell = &cells[ci];
            run_one(spec, cell, m, r, run_seed(master, m, cell.sweep, r))
        })
        .collect();
    let summary = summarize(&mut rows);
    Ok(BenchmarkOutput { rows, summary })
}

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| CliError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>, CliError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|r| r.map_err(CliError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_label() {
        let s = run_seed(1, Method::Scenario, 0.1, 0);
        assert_eq!(s, run_seed(1, Method::Scenario, 0.1, 0));
        assert_ne!(s, run_seed(2, Method::Scenario, 0.1, 0));
        assert_ne!(s, run_seed(1, Method::ALL[1], 0.1, 0));
        assert_ne!(s, run_seed(1, Method::Scenario, 0.3, 0));
        assert_ne!(s, run_seed(1, Method::Scenario, 0.1, 1));
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>(), Ok(m));
        }
        assert!("rrt".parse::<Method>().is_err());
    }

    fn rec(method: &str, sweep: f64, run: usize, cost: Option<f64>) -> RunRecord {
        RunRecord {
            schema_version: 1,
            method: method.into(),
            sweep,
            run,
            seed: 0,
            status: if cost.is_some() { RunStatus::Ok } else { RunStatus::NoPath },
            cost,
            normalized_cost: None,
            plan_time_s: 1.0,
            check_time_s: 0.5,
            segment_checks: 1,
            tree_size: 1,
        }
    }

    #[test]
    fn summary_normalizes_by_global_max_mean() {
        let mut rows = vec![
            rec("max_probability", 0.1, 0, Some(4.0)),
            rec("scenario", 0.1, 1, Some(3.0)),
            rec("scenario", 0.1, 0, Some(1.0)),
            rec("scenario", 0.3, 0, None),
        ];
        let s = summarize(&mut rows);
        assert_eq!(rows[0].method, "scenario");
        assert_eq!(rows[0].run, 0);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].normalized_mean, Some(0.5));
        assert_eq!(s[1].successes, 0);
        assert_eq!(s[1].mean_cost, None);
        assert_eq!(s[2].normalized_mean, Some(1.0));
        assert_eq!(rows[1].normalized_cost, Some(0.75));
    }

    #[test]
    fn csv_roundtrip_preserves_values() {
        let rows = vec![rec("scenario", 0.1, 0, Some(1.0 / 3.0)), rec("scenario", 0.1, 1, None)];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let back: Vec<RunRecord> = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }
}
