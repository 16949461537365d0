//! Scene and benchmark-spec files (TOML, versioned, unknown keys rejected).

use std::path::{Path, PathBuf};

use scc_core::collision::GaussianScene;
use scc_core::occupancy::{Aabb, AnalyticField};
use scc_core::planner::{PlannerConfig, TrackingErrorModel};
use scc_core::velocity::ScheduleConfig;
use scc_core::{Obstacle, RobotShape, Shape, TaskPose, Uncertainty, Vec3};
use serde::Deserialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    schema_version: u32,
    #[serde(default)]
    name: Option<String>,
    workspace: WorkspaceDoc,
    robot: RobotDoc,
    start: PoseDoc,
    goal: PoseDoc,
    #[serde(default)]
    obstacles: Vec<ObstacleDoc>,
    #[serde(default)]
    planner: PlannerDoc,
    #[serde(default)]
    schedule: ScheduleDoc,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkspaceDoc {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotDoc {
    semi_axes: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    position: [f64; 3],
    #[serde(default)]
    yaw: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum ShapeKind {
    Sphere,
    Cuboid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleDoc {
    kind: ShapeKind,
    center: [f64; 3],
    radius: Option<f64>,
    half_extents: Option<[f64; 3]>,
    yaw: Option<f64>,
    d_stop: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlannerDoc {
    delta: Option<f64>,
    n_x: Option<usize>,
    delta_p: Option<f64>,
    n_iter: Option<usize>,
    v_min: Option<f64>,
    v_max: Option<f64>,
    gamma_knots: Option<Vec<[f64; 2]>>,
    r: Option<f64>,
    steer_step: Option<f64>,
    goal_bias: Option<f64>,
    rewire_radius_factor: Option<f64>,
    continuous_cover: Option<bool>,
    shared_scenarios: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleDoc {
    l: Option<usize>,
    k: Option<usize>,
    pitch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObstacle {
    pub shape: Shape,
    pub d_stop: Option<f64>,
    pub sigma: Option<f64>,
}

/// Validated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub bounds: Aabb,
    pub robot: RobotShape,
    pub start: TaskPose,
    pub goal: TaskPose,
    pub obstacles: Vec<SceneObstacle>,
    pub planner: PlannerConfig,
    /// Number of `s` intervals for velocity scheduling.
    pub l: usize,
    /// Poses in the resampled path.
    pub k: usize,
    pub pitch: f64,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Invalid {
        field: field.to_string(),
        msg: msg.to_string(),
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn pose(field: &str, p: &PoseDoc) -> Result<TaskPose, CliError> {
    TaskPose::new(vec3(p.position), p.yaw).map_err(|e| invalid(field, e))
}

impl Scene {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let doc: SceneDoc = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", doc.schema_version),
            ));
        }
        let bounds = Aabb::new(vec3(doc.workspace.min), vec3(doc.workspace.max));
        if (0..3).any(|i| !(bounds.min[i] < bounds.max[i]) || !bounds.min[i].is_finite() || !bounds.max[i].is_finite()) {
            return Err(invalid("workspace", "min must be below max on every axis"));
        }
        let robot = RobotShape::ellipsoid(doc.robot.semi_axes).map_err(|e| invalid("robot.semi_axes", e))?;
        let start = pose("start", &doc.start)?;
        let goal = pose("goal", &doc.goal)?;

        let mut obstacles = Vec::with_capacity(doc.obstacles.len());
        for (i, o) in doc.obstacles.iter().enumerate() {
            let field = |f: &str| format!("obstacles[{i}].{f}");
            let shape = match o.kind {
                ShapeKind::Sphere => {
                    if o.half_extents.is_some() || o.yaw.is_some() {
                        return Err(invalid(&field("kind"), "sphere takes only center and radius"));
                    }
                    let r = o.radius.ok_or_else(|| invalid(&field("radius"), "missing"))?;
                    Shape::sphere(vec3(o.center), r).map_err(|e| invalid(&field("radius"), e))?
                }
                ShapeKind::Cuboid => {
                    if o.radius.is_some() {
                        return Err(invalid(&field("radius"), "cuboid takes half_extents, not radius"));
                    }
                    let h = o.half_extents.ok_or_else(|| invalid(&field("half_extents"), "missing"))?;
                    Shape::cuboid(vec3(o.center), vec3(h), o.yaw.unwrap_or(0.0))
                        .map_err(|e| invalid(&field("half_extents"), e))?
                }
            };
            for (name, v) in [("d_stop", o.d_stop), ("sigma", o.sigma)] {
                if let Some(v) = v {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(invalid(&field(name), format!("must be >= 0, got {v}")));
                    }
                }
            }
            obstacles.push(SceneObstacle {
                shape,
                d_stop: o.d_stop,
                sigma: o.sigma,
            });
        }

        let p = &doc.planner;
        let d = PlannerConfig::default();
        let gamma_tilde = match &p.gamma_knots {
            Some(k) => TrackingErrorModel::piecewise(k.iter().map(|a| (a[0], a[1])).collect())
                .map_err(|e| invalid("planner.gamma_knots", e))?,
            None => d.gamma_tilde.clone(),
        };
        let planner = PlannerConfig {
            delta: p.delta.unwrap_or(d.delta),
            n_x: p.n_x.unwrap_or(d.n_x),
            delta_p: p.delta_p.unwrap_or(d.delta_p),
            n_iter: p.n_iter.unwrap_or(d.n_iter),
            v_min: p.v_min.unwrap_or(d.v_min),
            v_max: p.v_max.unwrap_or(d.v_max),
            gamma_tilde,
            r: p.r.unwrap_or(d.r),
            steer_step: p.steer_step.or(d.steer_step),
            goal_bias: p.goal_bias.unwrap_or(d.goal_bias),
            rewire_radius_factor: p.rewire_radius_factor.or(d.rewire_radius_factor),
            continuous_cover: p.continuous_cover.unwrap_or(d.continuous_cover),
            shared_scenarios: p.shared_scenarios.unwrap_or(d.shared_scenarios),
            seed: d.seed,
        };
        planner.validate().map_err(|e| invalid("planner", e))?;

        let sd = ScheduleConfig::default();
        let l = doc.schedule.l.unwrap_or(200);
        let k = doc.schedule.k.unwrap_or(101);
        let pitch = doc.schedule.pitch.unwrap_or(sd.pitch);
        if l == 0 {
            return Err(invalid("schedule.l", "must be at least 1"));
        }
        if k < 2 {
            return Err(invalid("schedule.k", "must be at least 2"));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(invalid("schedule.pitch", "must be positive"));
        }

        Ok(Self {
            name: doc.name.unwrap_or_else(|| "scene".into()),
            bounds,
            robot,
            start,
            goal,
            obstacles,
            planner,
            l,
            k,
            pitch,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.in_file(path))
    }

    /// Linear-decay field; `d_stop` overrides every obstacle's own value.
    pub fn analytic_field(&self, d_stop: Option<f64>) -> Result<AnalyticField, CliError> {
        let obs = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let d = d_stop
                    .or(o.d_stop)
                    .ok_or_else(|| invalid(&format!("obstacles[{i}].d_stop"), "missing"))?;
                Obstacle::new(o.shape, Uncertainty::DStop(d)).map_err(|e| invalid(&format!("obstacles[{i}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        AnalyticField::new(&obs, self.bounds).map_err(|e| invalid("obstacles", e))
    }

    /// Gaussian-position scene for the baselines; `sigma` overrides.
    pub fn gaussian_scene(&self, sigma: Option<f64>) -> Result<GaussianScene, CliError> {
        let obs = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let s = sigma
                    .or(o.sigma)
                    .ok_or_else(|| invalid(&format!("obstacles[{i}].sigma"), "missing"))?;
                Obstacle::new(o.shape, Uncertainty::Sigma(s)).map_err(|e| invalid(&format!("obstacles[{i}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        GaussianScene::new(&obs).map_err(|e| invalid("obstacles", e))
    }

    pub fn schedule_config(&self) -> ScheduleConfig {
        ScheduleConfig {
            delta: self.planner.delta,
            pitch: self.pitch,
            gamma_tilde: self.planner.gamma_tilde.clone(),
            v_min: self.planner.v_min,
            v_max: self.planner.v_max,
            ..ScheduleConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Effective boundary `d~`: `d_stop = v / (1 - delta)`, `sigma = v / 2`.
    Uncertainty,
    /// Randomly placed spheres; values are obstacle counts.
    ObstacleCount,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    schema_version: u32,
    scene: PathBuf,
    sweep: SweepKind,
    values: Vec<f64>,
    methods: Vec<String>,
    #[serde(default)]
    runs: Option<usize>,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    l: Option<usize>,
    #[serde(default)]
    n_x: Option<usize>,
    #[serde(default)]
    n_iter: Option<usize>,
    #[serde(default)]
    obstacles: Option<RandomObstaclesDoc>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomObstaclesDoc {
    radius: f64,
    d_stop: f64,
    sigma: f64,
    /// Keep-out distance around start and goal positions.
    clearance: f64,
    raster_cell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomObstacles {
    pub radius: f64,
    pub d_stop: f64,
    pub sigma: f64,
    pub clearance: f64,
    pub raster_cell: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub scene: Scene,
    pub scene_path: PathBuf,
    pub sweep: SweepKind,
    pub values: Vec<f64>,
    pub methods: Vec<crate::bench::Method>,
    pub runs: usize,
    pub k: usize,
    pub random_obstacles: Option<RandomObstacles>,
}

impl BenchmarkSpec {
    /// `base` resolves the relative scene path.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let doc: SpecDoc = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", doc.schema_version),
            ));
        }
        if doc.values.is_empty() {
            return Err(invalid("values", "sweep must not be empty"));
        }
        if doc.methods.is_empty() {
            return Err(invalid("methods", "need at least one method"));
        }
        let methods = doc
            .methods
            .iter()
            .map(|m| m.parse().map_err(|e| invalid("methods", e)))
            .collect::<Result<Vec<crate::bench::Method>, _>>()?;
        let runs = doc.runs.unwrap_or(100);
        if runs == 0 {
            return Err(invalid("runs", "must be at least 1"));
        }
        let scene_path = base.join(&doc.scene);
        let mut scene = Scene::load(&scene_path)?;
        if let Some(n) = doc.n_x {
            scene.planner.n_x = n;
        }
        if let Some(n) = doc.n_iter {
            scene.planner.n_iter = n;
        }
        if let Some(l) = doc.l {
            scene.l = l;
        }
        scene.planner.validate().map_err(|e| invalid("planner", e))?;
        let k = doc.k.unwrap_or(scene.k);
        if k < 2 {
            return Err(invalid("k", "must be at least 2"));
        }
        match doc.sweep {
            SweepKind::Uncertainty => {
                if doc.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid("values", "uncertainty values must be >= 0"));
                }
            }
            SweepKind::ObstacleCount => {
                if doc.values.iter().any(|v| !(v.fract() == 0.0 && *v >= 1.0)) {
                    return Err(invalid("values", "obstacle counts must be positive integers"));
                }
                if doc.obstacles.is_none() {
                    return Err(invalid("obstacles", "obstacle_count sweeps need an [obstacles] table"));
                }
            }
        }
        let random_obstacles = doc.obstacles.map(|o| RandomObstacles {
            radius: o.radius,
            d_stop: o.d_stop,
            sigma: o.sigma,
            clearance: o.clearance,
            raster_cell: o.raster_cell,
        });
        Ok(Self {
            scene,
            scene_path,
            sweep: doc.sweep,
            values: doc.values,
            methods,
            runs,
            k,
            random_obstacles,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base).map_err(|e| e.in_file(path))
    }
}
