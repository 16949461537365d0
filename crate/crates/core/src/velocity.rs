//! Velocity scheduling along a fixed path: clearance to the unsafe set, the
//! largest admissible speed for that clearance, and time parameterization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RobotShape, TaskPose, Vec3};
use crate::occupancy::OccupancyField;
use crate::planner::{Path, TrackingErrorModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VelocityError {
    #[error("pose at s = {s} is not delta-safe (unsafe point inside the robot region)")]
    NotDeltaSafe { s: f64 },
    #[error("trajectory stalls on the interval starting at s = {s} (zero velocity)")]
    Stall { s: f64 },
    #[error("path has zero position length")]
    ZeroLength,
    #[error("profile has {profile} samples but needs at least 2")]
    TooFewSamples { profile: usize },
    #[error("invalid schedule config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub delta: f64,
    /// Lattice pitch for the unsafe-point candidates.
    pub pitch: f64,
    pub gamma_tilde: TrackingErrorModel,
    pub v_min: f64,
    pub v_max: f64,
    /// Number of closest grid candidates refined by bisection.
    pub refine: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            pitch: 5e-3,
            gamma_tilde: TrackingErrorModel::default(),
            v_min: 0.01,
            v_max: 0.2,
            refine: 8,
        }
    }
}

impl ScheduleConfig {
    fn validate(&self) -> Result<(), VelocityError> {
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(VelocityError::Config(format!("pitch must be positive, got {}", self.pitch)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(VelocityError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.v_min > 0.0 && self.v_min <= self.v_max) {
            return Err(VelocityError::Config("need 0 < v_min <= v_max".into()));
        }
        Ok(())
    }
}

/// Half extents of the world-frame box around a yawed ellipsoid.
fn rotated_half_extents(shape: &RobotShape, phi: f64) -> Vec3 {
    let [a, b, c] = shape.semi_axes();
    let (s, co) = phi.sin_cos();
    Vec3::new(
        ((a * co).powi(2) + (b * s).powi(2)).sqrt(),
        ((a * s).powi(2) + (b * co).powi(2)).sqrt(),
        c,
    )
}

/// Lower bound on the distance from a local point to the ellipsoid, from the
/// scaled copy of the ellipsoid passing through it.
fn distance_lower_bound(shape: &RobotShape, q: &Vec3) -> f64 {
    let [a, b, c] = shape.semi_axes();
    let level = ((q.x / a).powi(2) + (q.y / b).powi(2) + (q.z / c).powi(2)).sqrt();
    (level - 1.0).max(0.0) * a.min(b).min(c)
}

/// Distance from `R(pose)` to the unsafe set `{x : p_free(x) < 1 - delta}`,
/// saturated at `gamma(v_max)`.
///
/// Candidates sit on a global lattice inside the box around the region grown
/// by the saturation distance plus one pitch. The closest few unsafe
/// candidates are then pulled toward the region by bisection along the
/// segment from the nearest region point, so contact is resolved below the
/// grid pitch.
pub fn unsafe_distance_at(
    field: &dyn OccupancyField,
    pose: &TaskPose,
    shape: &RobotShape,
    cfg: &ScheduleConfig,
) -> Result<f64, VelocityError> {
    cfg.validate()?;
    let cap = cfg.gamma_tilde.eval(cfg.v_max);
    let threshold = 1.0 - cfg.delta;
    let h = cfg.pitch;
    let half = rotated_half_extents(shape, pose.phi).add_scalar(cap + h);
    let lo = pose.x - half;
    let hi = pose.x + half;
    let range = |i: usize| ((lo[i] / h).ceil() as i64, (hi[i] / h).floor() as i64);
    let (x0, x1) = range(0);
    let (y0, y1) = range(1);
    let (z0, z1) = range(2);

    let mut unsafe_pts: Vec<(f64, Vec3)> = Vec::new();
    for iz in z0..=z1 {
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let x = Vec3::new(ix as f64 * h, iy as f64 * h, iz as f64 * h);
                let q = pose.to_local(&x);
                let lb = distance_lower_bound(shape, &q);
                if lb > cap {
                    continue;
                }
                if field.p_free(&x) < threshold {
                    if shape.contains_local(&q) {
                        return Err(VelocityError::NotDeltaSafe { s: f64::NAN });
                    }
                    unsafe_pts.push((lb, x));
                }
            }
        }
    }
    if unsafe_pts.is_empty() {
        return Ok(cap);
    }

    let mut exact: Vec<(f64, Vec3)> = Vec::with_capacity(unsafe_pts.len());
    unsafe_pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::INFINITY;
    for &(lb, x) in &unsafe_pts {
        if lb >= best {
            break;
        }
        let d = shape.distance_local(&pose.to_local(&x));
        best = best.min(d);
        exact.push((d, x));
    }
    exact.sort_by(|a, b| a.0.total_cmp(&b.0));

    for &(_, x) in exact.iter().take(cfg.refine) {
        let q = pose.to_local(&x);
        let c = pose.apply_rigid_motion(&shape.closest_point_local(&q));
        // invariant: `outer` unsafe; `inner` safe unless the region already touches
        if field.p_free(&c) < threshold {
            return Ok(0.0);
        }
        let (mut inner, mut outer) = (c, x);
        for _ in 0..40 {
            let mid = 0.5 * (inner + outer);
            if field.p_free(&mid) < threshold {
                outer = mid;
            } else {
                inner = mid;
            }
        }
        best = best.min(shape.distance_local(&pose.to_local(&outer)));
    }
    Ok(best.min(cap))
}

/// [`unsafe_distance_at`] evaluated at `path.pose_at(s)`.
pub fn unsafe_distance(
    field: &dyn OccupancyField,
    path: &Path,
    s: f64,
    shape: &RobotShape,
    cfg: &ScheduleConfig,
) -> Result<f64, VelocityError> {
    unsafe_distance_at(field, &path.pose_at(s), shape, cfg).map_err(|e| match e {
        VelocityError::NotDeltaSafe { .. } => VelocityError::NotDeltaSafe { s },
        e => e,
    })
}

/// Largest speed in `[0, v_max]` whose tracking error fits in `d_o`.
pub fn max_velocity(d_o: f64, gamma_tilde: &TrackingErrorModel, v_max: f64) -> f64 {
    gamma_tilde.inverse(d_o.max(0.0), v_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub d_o: Vec<f64>,
    /// Sample indices where the planning inflation `gamma(v_min)` does not
    /// fit in the measured clearance, or the pose itself was found unsafe.
    pub violations: Vec<usize>,
}

/// Computes `d_o` and `v*` at `l + 1` evenly spaced values of `s`.
pub fn schedule(
    field: &dyn OccupancyField,
    path: &Path,
    shape: &RobotShape,
    cfg: &ScheduleConfig,
    l: usize,
) -> Result<VelocityProfile, VelocityError> {
    cfg.validate()?;
    if l == 0 {
        return Err(VelocityError::TooFewSamples { profile: 1 });
    }
    let s: Vec<f64> = (0..=l).map(|i| i as f64 / l as f64).collect();
    let gamma_min = cfg.gamma_tilde.eval(cfg.v_min);
    let rows: Vec<(f64, f64, bool)> = s
        .par_iter()
        .map(|&si| match unsafe_distance(field, path, si, shape, cfg) {
            Ok(d) => {
                let mut v = max_velocity(d, &cfg.gamma_tilde, cfg.v_max);
                let certified = gamma_min <= d;
                if certified {
                    v = v.max(cfg.v_min);
                }
                (d, v, !certified)
            }
            Err(_) => (0.0, 0.0, true),
        })
        .collect();
    Ok(VelocityProfile {
        s,
        d_o: rows.iter().map(|r| r.0).collect(),
        v: rows.iter().map(|r| r.1).collect(),
        violations: rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.2)
            .map(|(i, _)| i)
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub poses: Vec<TaskPose>,
    pub v: Vec<f64>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }
}

/// Integrates `dt = ds |pi'| / v` per interval using the smaller of the two
/// endpoint speeds.
pub fn time_parameterize(path: &Path, profile: &VelocityProfile) -> Result<Trajectory, VelocityError> {
    let n = profile.s.len();
    if n < 2 || profile.v.len() != n {
        return Err(VelocityError::TooFewSamples { profile: n });
    }
    let len = path.length();
    if len == 0.0 {
        return Err(VelocityError::ZeroLength);
    }
    let mut t = Vec::with_capacity(n);
    t.push(0.0);
    for i in 0..n - 1 {
        let v = profile.v[i].min(profile.v[i + 1]);
        if v <= 0.0 {
            return Err(VelocityError::Stall { s: profile.s[i] });
        }
        let ds = profile.s[i + 1] - profile.s[i];
        t.push(t[i] + ds * len / v);
    }
    Ok(Trajectory {
        t,
        poses: profile.s.iter().map(|&s| path.pose_at(s)).collect(),
        v: profile.v.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Obstacle, Shape, Uncertainty};
    use crate::occupancy::{Aabb, AnalyticField};
    use approx::assert_abs_diff_eq;

    fn bounds() -> Aabb {
        Aabb::new(Vec3::new(-3.0, -3.0, -3.0), Vec3::new(3.0, 3.0, 3.0))
    }

    fn sphere_field(r: f64, d_stop: f64) -> AnalyticField {
        let o = Obstacle::new(Shape::sphere(Vec3::zeros(), r).unwrap(), Uncertainty::DStop(d_stop)).unwrap();
        AnalyticField::new(&[o], bounds()).unwrap()
    }

    fn straight(len: f64) -> Path {
        Path::new(vec![
            TaskPose::from_xyz_yaw(0.0, 0.0, 0.0, 0.0),
            TaskPose::from_xyz_yaw(len, 0.0, 0.0, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn saturates_far_from_obstacles() {
        let f = sphere_field(0.2, 0.1);
        let shape = RobotShape::sphere(0.05).unwrap();
        let d = unsafe_distance_at(&f, &TaskPose::from_xyz_yaw(2.0, 0.0, 0.0, 0.0), &shape, &ScheduleConfig::default())
            .unwrap();
        assert_eq!(d, 0.01);
    }

    #[test]
    fn clearance_to_threshold_surface() {
        // threshold surface at 0.2 + 0.095 from the center
        let f = sphere_field(0.2, 0.1);
        let shape = RobotShape::sphere(0.05).unwrap();
        let cfg = ScheduleConfig::default();
        let r: f64 = 0.295 + 0.0097 + 0.05;
        let x = (r * r - 0.013f64.powi(2) - 0.007f64.powi(2)).sqrt();
        let d = unsafe_distance_at(&f, &TaskPose::from_xyz_yaw(x, 0.013, -0.007, 0.4), &shape, &cfg).unwrap();
        assert!((d - 0.0097).abs() <= cfg.pitch, "{d}");
    }

    #[test]
    fn touching_gives_zero_and_inside_is_rejected() {
        let f = sphere_field(0.2, 0.1);
        let shape = RobotShape::sphere(0.05).unwrap();
        let cfg = ScheduleConfig::default();
        let pose = TaskPose::from_xyz_yaw(0.3452, 0.0013, 0.0007, 0.0);
        let truth = pose.x.norm() - 0.05 - 0.295;
        let d = unsafe_distance_at(&f, &pose, &shape, &cfg).unwrap();
        assert!(d >= truth - 1e-9 && d < truth + 1e-4, "{d} vs {truth}");
        let e = unsafe_distance(&f, &straight(0.3), 0.5, &shape, &cfg);
        assert_eq!(e, Err(VelocityError::NotDeltaSafe { s: 0.5 }));
    }

    #[test]
    fn halving_pitch_moves_distance_by_at_most_one_pitch() {
        let f = sphere_field(0.3, 0.2);
        let shape = RobotShape::ellipsoid([0.1, 0.04, 0.02]).unwrap();
        let mut cfg = ScheduleConfig {
            refine: 0,
            ..ScheduleConfig::default()
        };
        let pose = TaskPose::from_xyz_yaw(0.3 + 0.19 + 0.105, 0.02, 0.01, 0.3);
        let coarse = unsafe_distance_at(&f, &pose, &shape, &cfg).unwrap();
        cfg.pitch /= 2.0;
        let fine = unsafe_distance_at(&f, &pose, &shape, &cfg).unwrap();
        assert!((coarse - fine).abs() <= 2.0 * cfg.pitch, "{coarse} {fine}");
    }

    #[test]
    fn affine_inversion() {
        let g = TrackingErrorModel::default();
        assert_eq!(max_velocity(0.01, &g, 0.2), 0.2);
        assert_abs_diff_eq!(max_velocity(0.005, &g, 0.2), 0.1, epsilon = 1e-6);
        assert_eq!(max_velocity(0.0, &g, 0.2), 0.0);
        assert_eq!(max_velocity(1.0, &g, 0.2), 0.2);
    }

    #[test]
    fn generalized_inverse_on_flat_piece() {
        let g = TrackingErrorModel::piecewise(vec![(0.0, 0.0), (0.1, 0.004), (0.2, 0.004), (0.3, 0.02)]).unwrap();
        // every speed up to 0.2 gives 0.004; the largest one is returned
        assert_abs_diff_eq!(max_velocity(0.004, &g, 0.3), 0.2, epsilon = 1e-6);
        let v = max_velocity(0.012, &g, 0.3);
        assert!(g.eval(v) <= 0.012);
        assert_abs_diff_eq!(v, 0.25, epsilon = 1e-6);
    }

    #[test]
    fn open_space_profile_is_constant() {
        let f = AnalyticField::new(&[], bounds()).unwrap();
        let shape = RobotShape::sphere(0.05).unwrap();
        let p = schedule(&f, &straight(1.0), &shape, &ScheduleConfig::default(), 10).unwrap();
        assert_eq!(p.s.len(), 11);
        assert!(p.v.iter().all(|&v| v == 0.2));
        assert!(p.violations.is_empty());
        let p1 = schedule(&f, &straight(1.0), &shape, &ScheduleConfig::default(), 1).unwrap();
        assert_eq!(p1.s, vec![0.0, 1.0]);
    }

    #[test]
    fn profile_dips_near_obstacle() {
        // passes 0.006 outside the threshold surface at its closest point
        let f = sphere_field(0.2, 0.1);
        let shape = RobotShape::sphere(0.05).unwrap();
        let y = 0.295 + 0.05 + 0.006;
        let path = Path::new(vec![
            TaskPose::from_xyz_yaw(-1.0, y, 0.0, 0.0),
            TaskPose::from_xyz_yaw(1.0, y, 0.0, 0.0),
        ])
        .unwrap();
        let cfg = ScheduleConfig::default();
        let p = schedule(&f, &path, &shape, &cfg, 40).unwrap();
        let mid = p.v[20];
        assert!(mid < 0.2 && mid >= cfg.v_min, "{mid}");
        assert_abs_diff_eq!(p.d_o[20], 0.006, epsilon = cfg.pitch);
        assert_eq!(p.v[0], 0.2);
        for (v, d) in p.v.iter().zip(&p.d_o) {
            assert!(cfg.gamma_tilde.eval(*v) <= *d);
        }
    }

    #[test]
    fn straight_path_duration() {
        let path = straight(1.0);
        let prof = VelocityProfile {
            s: (0..=200).map(|i| i as f64 / 200.0).collect(),
            v: vec![0.2; 201],
            d_o: vec![0.01; 201],
            violations: vec![],
        };
        let tr = time_parameterize(&path, &prof).unwrap();
        assert_abs_diff_eq!(tr.duration(), 5.0, epsilon = 1e-6);
        assert!(tr.t.windows(2).all(|w| w[1] > w[0]));

        let fast = VelocityProfile {
            v: vec![0.4; 201],
            ..prof.clone()
        };
        assert_abs_diff_eq!(time_parameterize(&path, &fast).unwrap().duration(), 2.5, epsilon = 1e-9);

        let split = VelocityProfile {
            v: (0..=200).map(|i| if i <= 100 { 0.2 } else { 0.1 }).collect(),
            ..prof.clone()
        };
        // one interval of 1/200 m is charged at the lower speed
        let tau = time_parameterize(&path, &split).unwrap().duration();
        assert!((tau - 7.5).abs() <= 0.005 / 0.1 + 1e-9, "{tau}");

        let mut stall = prof;
        stall.v[50] = 0.0;
        assert_eq!(time_parameterize(&path, &stall), Err(VelocityError::Stall { s: 0.245 }));
    }
}
