//! Poses, rigid motions and the shape primitives shared by the occupancy,
//! collision and velocity modules.
//!
//! Robot regions are ellipsoids moved by a yaw rotation about the vertical
//! axis followed by a translation. Obstacles are spheres or yawed cuboids.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("semi-axes must be strictly positive and finite, got {0:?}")]
    InvalidSemiAxes([f64; 3]),
    #[error("inflation must be finite and non-negative, got {0}")]
    InvalidInflation(f64),
    #[error("obstacle dimensions must be strictly positive, got {0:?}")]
    InvalidObstacle(Vec<f64>),
    #[error("pose must be finite")]
    NonFinitePose,
    #[error("sample count must be at least 1")]
    EmptySampleRequest,
    #[error("rejection sampling acceptance rate {rate:.2e} fell below 1e-4 (degenerate region)")]
    DegenerateRegion { rate: f64 },
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(phi: f64) -> f64 {
    let mut a = phi.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Signed shortest-arc difference `to - from`, in (-pi, pi].
pub fn angle_diff(from: f64, to: f64) -> f64 {
    wrap_angle(to - from)
}

/// Position plus yaw about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskPose {
    pub x: Vec3,
    pub phi: f64,
}

impl TaskPose {
    pub fn new(x: Vec3, phi: f64) -> Result<Self, GeometryError> {
        if !x.iter().all(|c| c.is_finite()) || !phi.is_finite() {
            return Err(GeometryError::NonFinitePose);
        }
        Ok(Self {
            x,
            phi: wrap_angle(phi),
        })
    }

    /// Convenience constructor for literals known to be finite.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, phi: f64) -> Self {
        Self {
            x: Vec3::new(x, y, z),
            phi: wrap_angle(phi),
        }
    }

    /// Maps a point from the reference frame of the region into the workspace.
    pub fn apply_rigid_motion(&self, x0: &Vec3) -> Vec3 {
        let (s, c) = self.phi.sin_cos();
        Vec3::new(c * x0.x - s * x0.y, s * x0.x + c * x0.y, x0.z) + self.x
    }

    /// Inverse of [`TaskPose::apply_rigid_motion`].
    pub fn to_local(&self, x: &Vec3) -> Vec3 {
        let d = x - self.x;
        let (s, c) = self.phi.sin_cos();
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// Linear interpolation; yaw follows the shortest arc.
    pub fn lerp(&self, other: &TaskPose, t: f64) -> TaskPose {
        TaskPose {
            x: self.x + (other.x - self.x) * t,
            phi: wrap_angle(self.phi + angle_diff(self.phi, other.phi) * t),
        }
    }
}

pub fn apply_rigid_motion(p: &TaskPose, x0: &Vec3) -> Vec3 {
    p.apply_rigid_motion(x0)
}

/// Reference region of the robot: an ellipsoid centered at the local origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotShape {
    semi_axes: [f64; 3],
}

impl RobotShape {
    pub fn ellipsoid(semi_axes: [f64; 3]) -> Result<Self, GeometryError> {
        if semi_axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(GeometryError::InvalidSemiAxes(semi_axes));
        }
        Ok(Self { semi_axes })
    }

    pub fn sphere(radius: f64) -> Result<Self, GeometryError> {
        Self::ellipsoid([radius; 3])
    }

    pub fn semi_axes(&self) -> [f64; 3] {
        self.semi_axes
    }

    pub fn enclosing_radius(&self) -> f64 {
        self.semi_axes.iter().cloned().fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.semi_axes.iter().product::<f64>()
    }

    pub fn contains_local(&self, q: &Vec3) -> bool {
        self.level(q) <= 1.0
    }

    fn level(&self, q: &Vec3) -> f64 {
        let [a, b, c] = self.semi_axes;
        (q.x / a).powi(2) + (q.y / b).powi(2) + (q.z / c).powi(2)
    }

    /// Closest point of the ellipsoid to `q`, both in the local frame.
    ///
    /// Outside points project to `y_i = a_i^2 q_i / (a_i^2 + t)` where `t > 0`
    /// solves `sum (a_i q_i / (a_i^2 + t))^2 = 1`. The left side is strictly
    /// decreasing in `t`, so a bracketed bisection converges for any aspect
    /// ratio.
    pub fn closest_point_local(&self, q: &Vec3) -> Vec3 {
        if self.contains_local(q) {
            return *q;
        }
        let a2 = self.semi_axes.map(|a| a * a);
        let f = |t: f64| -> f64 {
            (0..3)
                .map(|i| {
                    let r = self.semi_axes[i] * q[i] / (a2[i] + t);
                    r * r
                })
                .sum::<f64>()
                - 1.0
        };
        let mut lo = 0.0;
        let mut hi = self.enclosing_radius() * q.norm();
        // f(hi) <= 0 holds analytically; guard against rounding.
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        let t = 0.5 * (lo + hi);
        Vec3::new(
            a2[0] * q.x / (a2[0] + t),
            a2[1] * q.y / (a2[1] + t),
            a2[2] * q.z / (a2[2] + t),
        )
    }

    /// Euclidean distance from a local-frame point to the ellipsoid (0 inside).
    pub fn distance_local(&self, q: &Vec3) -> f64 {
        if self.contains_local(q) {
            0.0
        } else {
            (q - self.closest_point_local(q)).norm()
        }
    }
}

/// Distance from a workspace point to `R(p)`, zero inside.
pub fn distance_point_to_region(x: &Vec3, p: &TaskPose, shape: &RobotShape) -> f64 {
    shape.distance_local(&p.to_local(x))
}

/// The robot region dilated by a ball: `R0 ⊕ B(inflation)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRegion {
    pub shape: RobotShape,
    pub inflation: f64,
}

/// Attempts before the acceptance-rate guard is evaluated.
const MIN_ATTEMPTS_FOR_GUARD: u64 = 10_000;
const MIN_ACCEPTANCE_RATE: f64 = 1e-4;

impl SampleRegion {
    pub fn new(shape: RobotShape, inflation: f64) -> Result<Self, GeometryError> {
        if !(inflation.is_finite() && inflation >= 0.0) {
            return Err(GeometryError::InvalidInflation(inflation));
        }
        Ok(Self { shape, inflation })
    }

    pub fn inflated(&self, extra: f64) -> Self {
        Self {
            shape: self.shape,
            inflation: self.inflation + extra.max(0.0),
        }
    }

    pub fn contains_local(&self, q: &Vec3) -> bool {
        let level = self.shape.level(q);
        if level <= 1.0 {
            return true;
        }
        if self.inflation == 0.0 {
            return false;
        }
        // q lies on the ellipsoid scaled by k, whose gap to the bare
        // ellipsoid is between (k-1)*min_axis and (k-1)*max_axis.
        let k1 = level.sqrt() - 1.0;
        let axes = self.shape.semi_axes();
        let min_a = axes.iter().cloned().fold(f64::INFINITY, f64::min);
        if k1 * min_a > self.inflation {
            return false;
        }
        if k1 * self.shape.enclosing_radius() <= self.inflation {
            return true;
        }
        self.shape.distance_local(q) <= self.inflation
    }

    pub fn half_extents(&self) -> Vec3 {
        let [a, b, c] = self.shape.semi_axes();
        Vec3::new(a, b, c).add_scalar(self.inflation)
    }

    pub fn enclosing_radius(&self) -> f64 {
        self.shape.enclosing_radius() + self.inflation
    }

    /// `n` i.i.d. uniform points in the local frame, by rejection from the
    /// bounding box.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec3>, GeometryError> {
        if n == 0 {
            return Err(GeometryError::EmptySampleRequest);
        }
        let mut out = Vec::with_capacity(n);
        let mut sampler = RegionSampler::new(self);
        while out.len() < n {
            out.push(sampler.next(rng)?);
        }
        Ok(out)
    }
}

/// Streaming rejection sampler, for callers that stop early.
pub struct RegionSampler<'a> {
    region: &'a SampleRegion,
    h: Vec3,
    attempts: u64,
    accepted: u64,
}

impl<'a> RegionSampler<'a> {
    pub fn new(region: &'a SampleRegion) -> Self {
        Self {
            region,
            h: region.half_extents(),
            attempts: 0,
            accepted: 0,
        }
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec3, GeometryError> {
        loop {
            self.attempts += 1;
            let q = Vec3::new(
                self.h.x * (2.0 * rng.gen::<f64>() - 1.0),
                self.h.y * (2.0 * rng.gen::<f64>() - 1.0),
                self.h.z * (2.0 * rng.gen::<f64>() - 1.0),
            );
            if self.region.contains_local(&q) {
                self.accepted += 1;
                return Ok(q);
            }
            check_acceptance(self.attempts, self.accepted)?;
        }
    }
}

fn check_acceptance(attempts: u64, accepted: u64) -> Result<(), GeometryError> {
    if attempts >= MIN_ATTEMPTS_FOR_GUARD {
        let rate = accepted as f64 / attempts as f64;
        if rate < MIN_ACCEPTANCE_RATE {
            return Err(GeometryError::DegenerateRegion { rate });
        }
    }
    Ok(())
}

pub fn sample_region_uniform<R: Rng + ?Sized>(
    region: &SampleRegion,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec3>, GeometryError> {
    region.sample_uniform(n, rng)
}

/// Uniform point in the ball of radius `r` around the origin.
pub fn sample_ball<R: Rng + ?Sized>(r: f64, rng: &mut R) -> Vec3 {
    if r <= 0.0 {
        return Vec3::zeros();
    }
    loop {
        let q = Vec3::new(
            2.0 * rng.gen::<f64>() - 1.0,
            2.0 * rng.gen::<f64>() - 1.0,
            2.0 * rng.gen::<f64>() - 1.0,
        );
        if q.norm_squared() <= 1.0 {
            return q * r;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    Cuboid {
        center: Vec3,
        half_extents: Vec3,
        yaw: f64,
    },
}

impl Shape {
    pub fn sphere(center: Vec3, radius: f64) -> Result<Self, GeometryError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::InvalidObstacle(vec![radius]));
        }
        Ok(Shape::Sphere { center, radius })
    }

    pub fn cuboid(center: Vec3, half_extents: Vec3, yaw: f64) -> Result<Self, GeometryError> {
        if half_extents.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(GeometryError::InvalidObstacle(half_extents.iter().cloned().collect()));
        }
        Ok(Shape::Cuboid {
            center,
            half_extents,
            yaw,
        })
    }

    pub fn center(&self) -> Vec3 {
        match self {
            Shape::Sphere { center, .. } | Shape::Cuboid { center, .. } => *center,
        }
    }

    /// Distance to the surface, negative inside.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (x - center).norm() - radius,
            Shape::Cuboid {
                center,
                half_extents,
                yaw,
            } => {
                let d = x - center;
                let (s, c) = yaw.sin_cos();
                let q = Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z);
                let e = q.abs() - half_extents;
                let outside = e.map(|v| v.max(0.0)).norm();
                let inside = e.x.max(e.y).max(e.z).min(0.0);
                outside + inside
            }
        }
    }

    /// Axis-aligned bounding box of the shape grown by `margin`.
    pub fn aabb(&self, margin: f64) -> (Vec3, Vec3) {
        let h = match self {
            Shape::Sphere { radius, .. } => Vec3::repeat(*radius),
            Shape::Cuboid {
                half_extents, yaw, ..
            } => {
                let (s, c) = yaw.sin_cos();
                Vec3::new(
                    c.abs() * half_extents.x + s.abs() * half_extents.y,
                    s.abs() * half_extents.x + c.abs() * half_extents.y,
                    half_extents.z,
                )
            }
        }
        .add_scalar(margin);
        let c = self.center();
        (c - h, c + h)
    }

    /// Volume of `shape ⊕ B(r)` (Steiner formula for the box).
    pub fn minkowski_ball_volume(&self, r: f64) -> f64 {
        match self {
            Shape::Sphere { radius, .. } => 4.0 / 3.0 * PI * (radius + r).powi(3),
            Shape::Cuboid { half_extents, .. } => {
                let (a, b, c) = (
                    2.0 * half_extents.x,
                    2.0 * half_extents.y,
                    2.0 * half_extents.z,
                );
                a * b * c
                    + 2.0 * r * (a * b + b * c + c * a)
                    + PI * r * r * (a + b + c)
                    + 4.0 / 3.0 * PI * r.powi(3)
            }
        }
    }

    pub fn scaled(&self, k: f64) -> Shape {
        match *self {
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: center * k,
                radius: radius * k,
            },
            Shape::Cuboid {
                center,
                half_extents,
                yaw,
            } => Shape::Cuboid {
                center: center * k,
                half_extents: half_extents * k,
                yaw,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uncertainty {
    /// Occupancy decays linearly to zero at this distance from the surface.
    DStop(f64),
    /// Isotropic Gaussian position uncertainty.
    Sigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub shape: Shape,
    pub uncertainty: Uncertainty,
}

impl Obstacle {
    pub fn new(shape: Shape, uncertainty: Uncertainty) -> Result<Self, GeometryError> {
        let u = match uncertainty {
            Uncertainty::DStop(v) | Uncertainty::Sigma(v) => v,
        };
        if !(u.is_finite() && u >= 0.0) {
            return Err(GeometryError::InvalidObstacle(vec![u]));
        }
        Ok(Self { shape, uncertainty })
    }
}

pub fn distance_point_to_obstacle(x: &Vec3, o: &Obstacle) -> f64 {
    o.shape.signed_distance(x)
}
