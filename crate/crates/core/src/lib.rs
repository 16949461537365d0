//! Scenario chance-constrained path planning over probabilistic occupancy
//! fields, with velocity scheduling against a speed-dependent tracking error
//! bound, parametric baseline collision checkers and calibration metrics.

pub mod collision;
pub mod geometry;
pub mod metrics;
pub mod occupancy;
pub mod planner;
pub mod rng;
pub mod velocity;

pub use geometry::{Obstacle, RobotShape, SampleRegion, Shape, TaskPose, Uncertainty, Vec3};
pub use occupancy::{AnalyticField, OccupancyField, RasterField};
