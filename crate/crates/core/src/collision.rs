//! δ-safety checks for poses and straight task-space segments.
//!
//! The scenario checker samples the (inflated) robot region, moves the
//! samples to the pose and thresholds the occupancy field at `1 - delta`.
//! Three parametric per-obstacle checkers over Gaussian obstacle positions
//! serve as baselines.

use statrs::distribution::{ContinuousCDF, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angle_diff, GeometryError, Obstacle, RegionSampler, SampleRegion, Shape, TaskPose,
    Uncertainty, Vec3,
};
use crate::occupancy::OccupancyField;
use crate::rng::PlannerRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("n_x must be at least 1")]
    InvalidSampleCount,
    #[error("pose spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("obstacle {0} carries no sigma; baselines need Gaussian obstacles")]
    MissingSigma(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyConfig {
    pub delta: f64,
    pub n_x: usize,
    pub delta_p: f64,
    /// Grow the sample region by half the displacement between consecutive
    /// checked poses so the check covers the continuous segment.
    pub continuous_cover: bool,
    /// Reuse one fixed scenario set for every pose instead of redrawing.
    pub shared_scenarios: bool,
}

impl SafetyConfig {
    pub fn new(delta: f64, n_x: usize, delta_p: f64) -> Result<Self, CollisionError> {
        let cfg = Self {
            delta,
            n_x,
            delta_p,
            continuous_cover: false,
            shared_scenarios: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CollisionError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CollisionError::InvalidDelta(self.delta));
        }
        if self.n_x == 0 {
            return Err(CollisionError::InvalidSampleCount);
        }
        if !(self.delta_p.is_finite() && self.delta_p > 0.0) {
            return Err(CollisionError::InvalidSpacing(self.delta_p));
        }
        Ok(())
    }
}

/// Poses checked along `[p1, p2]` and the cover radius that makes the
/// discrete checks cover the continuous motion between them.
///
/// Spacing follows the position distance; a pure rotation is spaced by the
/// arc travelled by the farthest region point (`radius * |dphi|`).
pub fn segment_poses(p1: &TaskPose, p2: &TaskPose, delta_p: f64, radius: f64) -> (Vec<TaskPose>, f64) {
    let dx = (p2.x - p1.x).norm();
    let arc = radius * angle_diff(p1.phi, p2.phi).abs();
    let len = dx.max(arc);
    if len == 0.0 {
        return (vec![*p1], 0.0);
    }
    let steps = (len / delta_p).ceil().max(1.0) as usize;
    let poses = (0..=steps)
        .map(|i| {
            let t = (i as f64 * delta_p / len).min(1.0);
            if i == steps {
                *p2
            } else {
                p1.lerp(p2, t)
            }
        })
        .collect();
    let step_disp = (dx + arc) * (delta_p / len).min(1.0);
    (poses, 0.5 * step_disp)
}

/// Common interface used by the planner.
pub trait SafetyChecker: Sync {
    fn pose_safe(&self, p: &TaskPose, rng: &mut PlannerRng) -> bool;

    fn segment_safe(&self, p1: &TaskPose, p2: &TaskPose, rng: &mut PlannerRng) -> bool;

    fn name(&self) -> &'static str;

    fn config(&self) -> &SafetyConfig;
}

/// Sampling-based δ-safety over an occupancy field.
pub struct ScenarioChecker<'a> {
    field: &'a dyn OccupancyField,
    region: SampleRegion,
    cfg: SafetyConfig,
    threshold: f64,
    scenarios: Option<Vec<Vec3>>,
}

impl<'a> ScenarioChecker<'a> {
    /// `region` must already carry the tracking-error inflation.
    pub fn new(
        field: &'a dyn OccupancyField,
        region: SampleRegion,
        cfg: SafetyConfig,
        rng: &mut PlannerRng,
    ) -> Result<Self, CollisionError> {
        cfg.validate()?;
        let scenarios = if cfg.shared_scenarios {
            let r = if cfg.continuous_cover {
                region.inflated(cfg.delta_p)
            } else {
                region
            };
            Some(r.sample_uniform(cfg.n_x, rng)?)
        } else {
            // probe once so a degenerate region fails here, not mid-search
            region.sample_uniform(1, rng)?;
            None
        };
        Ok(Self {
            field,
            region,
            cfg,
            threshold: 1.0 - cfg.delta,
            scenarios,
        })
    }

    /// Fixed scenario set supplied by the caller (reference frame points).
    pub fn with_scenarios(
        field: &'a dyn OccupancyField,
        region: SampleRegion,
        cfg: SafetyConfig,
        scenarios: Vec<Vec3>,
    ) -> Result<Self, CollisionError> {
        cfg.validate()?;
        Ok(Self {
            field,
            region,
            cfg: SafetyConfig {
                shared_scenarios: true,
                ..cfg
            },
            threshold: 1.0 - cfg.delta,
            scenarios: Some(scenarios),
        })
    }

    pub fn region(&self) -> &SampleRegion {
        &self.region
    }

    fn check_pose(&self, p: &TaskPose, region: &SampleRegion, rng: &mut PlannerRng) -> bool {
        if let Some(fixed) = &self.scenarios {
            return fixed
                .iter()
                .all(|x0| self.field.p_free(&p.apply_rigid_motion(x0)) >= self.threshold);
        }
        let mut sampler = RegionSampler::new(region);
        for _ in 0..self.cfg.n_x {
            match sampler.next(rng) {
                Ok(x0) => {
                    if self.field.p_free(&p.apply_rigid_motion(&x0)) < self.threshold {
                        return false;
                    }
                }
                // unreachable for validated ellipsoids; refuse rather than guess
                Err(_) => return false,
            }
        }
        true
    }
}

impl SafetyChecker for ScenarioChecker<'_> {
    fn pose_safe(&self, p: &TaskPose, rng: &mut PlannerRng) -> bool {
        self.check_pose(p, &self.region, rng)
    }

    fn segment_safe(&self, p1: &TaskPose, p2: &TaskPose, rng: &mut PlannerRng) -> bool {
        let (poses, cover) =
            segment_poses(p1, p2, self.cfg.delta_p, self.region.shape.enclosing_radius());
        let region = if self.cfg.continuous_cover {
            self.region.inflated(cover)
        } else {
            self.region
        };
        poses.iter().all(|p| self.check_pose(p, &region, rng))
    }

    fn name(&self) -> &'static str {
        "scenario"
    }

    fn config(&self) -> &SafetyConfig {
        &self.cfg
    }
}

pub fn pose_is_delta_safe(
    field: &dyn OccupancyField,
    p: &TaskPose,
    region: &SampleRegion,
    cfg: &SafetyConfig,
    rng: &mut PlannerRng,
) -> Result<bool, CollisionError> {
    let checker = ScenarioChecker::new(field, *region, *cfg, rng)?;
    Ok(checker.pose_safe(p, rng))
}

pub fn segment_is_delta_safe(
    field: &dyn OccupancyField,
    p1: &TaskPose,
    p2: &TaskPose,
    region: &SampleRegion,
    cfg: &SafetyConfig,
    rng: &mut PlannerRng,
) -> Result<bool, CollisionError> {
    let checker = ScenarioChecker::new(field, *region, *cfg, rng)?;
    Ok(checker.segment_safe(p1, p2, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Obstacles inflated by `2 sigma`.
    BoundingVolume,
    /// Linearized Gaussian tail bound: clearance `>= sigma * z(1 - delta)`.
    ChanceConstraint,
    /// Collision probability bounded by volume times peak density.
    MaxProbability,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::BoundingVolume,
        BaselineKind::ChanceConstraint,
        BaselineKind::MaxProbability,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::BoundingVolume => "bounding_volume",
            BaselineKind::ChanceConstraint => "chance_constraint",
            BaselineKind::MaxProbability => "max_probability",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianObstacle {
    /// Nominal geometry placed at the mean position.
    pub shape: Shape,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianScene {
    pub obstacles: Vec<GaussianObstacle>,
}

impl GaussianScene {
    pub fn new(obstacles: &[Obstacle]) -> Result<Self, CollisionError> {
        let obstacles = obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| match o.uncertainty {
                Uncertainty::Sigma(sigma) => Ok(GaussianObstacle {
                    shape: o.shape,
                    sigma,
                }),
                Uncertainty::DStop(_) => Err(CollisionError::MissingSigma(i)),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { obstacles })
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            obstacles: self
                .obstacles
                .iter()
                .map(|o| GaussianObstacle {
                    shape: o.shape.scaled(k),
                    sigma: o.sigma * k,
                })
                .collect(),
        }
    }
}

/// Per-obstacle parametric check. The robot region is over-approximated by
/// its enclosing sphere of radius `radius` around the pose position.
pub struct BaselineChecker<'a> {
    kind: BaselineKind,
    scene: &'a GaussianScene,
    region: SampleRegion,
    cfg: SafetyConfig,
    z: f64,
}

impl<'a> BaselineChecker<'a> {
    pub fn new(
        kind: BaselineKind,
        scene: &'a GaussianScene,
        region: SampleRegion,
        cfg: SafetyConfig,
    ) -> Result<Self, CollisionError> {
        cfg.validate()?;
        let z = Normal::standard().inverse_cdf(1.0 - cfg.delta);
        Ok(Self {
            kind,
            scene,
            region,
            cfg,
            z,
        })
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    fn obstacle_safe(&self, o: &GaussianObstacle, center: &Vec3, radius: f64) -> bool {
        let clearance = o.shape.signed_distance(center) - radius;
        match self.kind {
            BaselineKind::BoundingVolume => clearance >= 2.0 * o.sigma,
            BaselineKind::ChanceConstraint => clearance >= o.sigma * self.z,
            BaselineKind::MaxProbability => {
                if o.sigma == 0.0 {
                    return clearance > 0.0;
                }
                let q = clearance.max(0.0);
                let var = o.sigma * o.sigma;
                let peak = (2.0 * std::f64::consts::PI * var).powf(-1.5) * (-q * q / (2.0 * var)).exp();
                o.shape.minkowski_ball_volume(radius) * peak <= self.cfg.delta
            }
        }
    }

    fn check_pose(&self, p: &TaskPose, radius: f64) -> bool {
        self.scene
            .obstacles
            .iter()
            .all(|o| self.obstacle_safe(o, &p.x, radius))
    }
}

impl SafetyChecker for BaselineChecker<'_> {
    fn pose_safe(&self, p: &TaskPose, _rng: &mut PlannerRng) -> bool {
        self.check_pose(p, self.region.enclosing_radius())
    }

    fn segment_safe(&self, p1: &TaskPose, p2: &TaskPose, _rng: &mut PlannerRng) -> bool {
        let (poses, cover) =
            segment_poses(p1, p2, self.cfg.delta_p, self.region.shape.enclosing_radius());
        let radius = self.region.enclosing_radius() + if self.cfg.continuous_cover { cover } else { 0.0 };
        poses.iter().all(|p| self.check_pose(p, radius))
    }

    fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn config(&self) -> &SafetyConfig {
        &self.cfg
    }
}

fn baseline_segment(
    kind: BaselineKind,
    scene: &GaussianScene,
    p1: &TaskPose,
    p2: &TaskPose,
    region: &SampleRegion,
    cfg: &SafetyConfig,
) -> Result<bool, CollisionError> {
    let checker = BaselineChecker::new(kind, scene, *region, *cfg)?;
    let mut rng = crate::rng::stream_rng(0, 0);
    Ok(checker.segment_safe(p1, p2, &mut rng))
}

pub fn baseline_bounding_volume(
    scene: &GaussianScene,
    p1: &TaskPose,
    p2: &TaskPose,
    region: &SampleRegion,
    cfg: &SafetyConfig,
) -> Result<bool, CollisionError> {
    baseline_segment(BaselineKind::BoundingVolume, scene, p1, p2, region, cfg)
}

pub fn baseline_chance_constraint(
    scene: &GaussianScene,
    p1: &TaskPose,
    p2: &TaskPose,
    region: &SampleRegion,
    cfg: &SafetyConfig,
) -> Result<bool, CollisionError> {
    baseline_segment(BaselineKind::ChanceConstraint, scene, p1, p2, region, cfg)
}

pub fn baseline_max_prob(
    scene: &GaussianScene,
    p1: &TaskPose,
    p2: &TaskPose,
    region: &SampleRegion,
    cfg: &SafetyConfig,
) -> Result<bool, CollisionError> {
    baseline_segment(BaselineKind::MaxProbability, scene, p1, p2, region, cfg)
}
