//! Calibration metrics for free-space probability rasters, path-cost
//! aggregation and Monte-Carlo checking of executed trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{sample_ball, RobotShape, SampleRegion};
use crate::occupancy::OccupancyField;
use crate::planner::{line_cost, TrackingErrorModel};
use crate::rng::stream_rng;
use crate::velocity::Trajectory;

pub const NLL_EPS: f64 = 1e-7;
pub const RELIABILITY_BINS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("raster is empty")]
    Empty,
    #[error("prediction has {prediction} cells, truth has {truth}")]
    LengthMismatch { prediction: usize, truth: usize },
    #[error("label {label} at cell {cell} is not 0 or 1")]
    InvalidLabel { cell: usize, label: u8 },
    #[error("probability {p} at cell {cell} is outside [0, 1]")]
    InvalidProbability { cell: usize, p: f64 },
}

/// Predicted free-space probability and ground-truth label per cell
/// (label 1 = free, 0 = obstacle).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRaster {
    prediction: Vec<f64>,
    truth: Vec<u8>,
}

impl LabeledRaster {
    pub fn new(prediction: Vec<f64>, truth: Vec<u8>) -> Result<Self, MetricsError> {
        if prediction.len() != truth.len() {
            return Err(MetricsError::LengthMismatch {
                prediction: prediction.len(),
                truth: truth.len(),
            });
        }
        if prediction.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some((cell, &label)) = truth.iter().enumerate().find(|(_, &y)| y > 1) {
            return Err(MetricsError::InvalidLabel { cell, label });
        }
        if let Some((cell, &p)) = prediction.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(MetricsError::InvalidProbability { cell, p });
        }
        Ok(Self { prediction, truth })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn prediction(&self) -> &[f64] {
        &self.prediction
    }

    pub fn truth(&self) -> &[u8] {
        &self.truth
    }

    fn hard(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        self.prediction
            .iter()
            .zip(&self.truth)
            .map(|(&p, &y)| (u8::from(p >= 0.5), y))
    }
}

pub fn pixel_accuracy(lr: &LabeledRaster) -> f64 {
    let correct = lr.hard().filter(|(p, y)| p == y).count();
    correct as f64 / lr.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub iou: f64,
    /// The class occurs in neither prediction nor truth; `iou` is set to 1.
    pub absent: bool,
}

/// IoU of the obstacle class (index 0) and the free class (index 1).
pub fn class_iou(lr: &LabeledRaster) -> [ClassIou; 2] {
    [0u8, 1u8].map(|c| {
        let (mut inter, mut union) = (0usize, 0usize);
        for (p, y) in lr.hard() {
            if p == c && y == c {
                inter += 1;
            }
            if p == c || y == c {
                union += 1;
            }
        }
        if union == 0 {
            ClassIou { iou: 1.0, absent: true }
        } else {
            ClassIou {
                iou: inter as f64 / union as f64,
                absent: false,
            }
        }
    })
}

pub fn mean_iou(lr: &LabeledRaster) -> f64 {
    let [a, b] = class_iou(lr);
    0.5 * (a.iou + b.iou)
}

pub fn brier_score(lr: &LabeledRaster) -> f64 {
    let sum: f64 = lr
        .prediction
        .iter()
        .zip(&lr.truth)
        .map(|(&p, &y)| (p - f64::from(y)).powi(2))
        .sum();
    sum / lr.len() as f64
}

pub fn nll(lr: &LabeledRaster) -> f64 {
    let sum: f64 = lr
        .prediction
        .iter()
        .zip(&lr.truth)
        .map(|(&p, &y)| {
            let p = p.clamp(NLL_EPS, 1.0 - NLL_EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    sum / lr.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityDiagram {
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityDiagram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Confidence `max(p, 1 - p)` binned over `[0.5, 1)` in steps of 0.05; a
/// confidence of exactly 1 falls in the top bin.
pub fn reliability(lr: &LabeledRaster) -> ReliabilityDiagram {
    let mut count = [0usize; RELIABILITY_BINS];
    let mut conf = [0f64; RELIABILITY_BINS];
    let mut correct = [0usize; RELIABILITY_BINS];
    for (&p, &y) in lr.prediction.iter().zip(&lr.truth) {
        let c = p.max(1.0 - p);
        let k = (((c - 0.5) * 20.0).floor() as usize).min(RELIABILITY_BINS - 1);
        count[k] += 1;
        conf[k] += c;
        if u8::from(p >= 0.5) == y {
            correct[k] += 1;
        }
    }
    let bins = (0..RELIABILITY_BINS)
        .map(|k| {
            let n = count[k];
            ReliabilityBin {
                lower: 0.5 + 0.05 * k as f64,
                upper: 0.5 + 0.05 * (k + 1) as f64,
                count: n,
                mean_confidence: (n > 0).then(|| conf[k] / n as f64),
                accuracy: (n > 0).then(|| correct[k] as f64 / n as f64),
            }
        })
        .collect();
    ReliabilityDiagram { bins }
}

/// Sum of line costs over consecutive poses.
pub fn path_cost(poses: &[crate::geometry::TaskPose], r: f64) -> f64 {
    poses.windows(2).map(|w| line_cost(&w[0], &w[1], r)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCell {
    pub method: String,
    pub sweep: f64,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCell {
    pub method: String,
    pub sweep: f64,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub normalized_mean: f64,
    pub normalized_std: f64,
}

/// Per-cell mean and sample standard deviation, both divided by the largest
/// mean across all non-empty cells. Empty cells yield NaN.
pub fn normalized_costs(cells: &[CostCell]) -> Vec<NormalizedCell> {
    let stats: Vec<(f64, f64)> = cells.iter().map(|c| mean_std(&c.costs)).collect();
    let max = stats
        .iter()
        .map(|s| s.0)
        .filter(|m| m.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    cells
        .iter()
        .zip(stats)
        .map(|(c, (mean, std))| NormalizedCell {
            method: c.method.clone(),
            sweep: c.sweep,
            runs: c.costs.len(),
            mean,
            std,
            normalized_mean: mean / max,
            normalized_std: std / max,
        })
        .collect()
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub delta: f64,
    pub n_trials: usize,
    /// Robot points sampled per knot and trial.
    pub points_per_knot: usize,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            n_trials: 1000,
            points_per_knot: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub samples: usize,
    pub violations: usize,
    pub fraction: f64,
    /// Trials with at least one violating sample.
    pub failed_trials: usize,
}

/// Perturbs every knot position uniformly inside a ball of radius
/// `gamma(v_knot)`, samples points of the robot region at the perturbed pose
/// and counts points whose free probability is below `1 - delta`.
pub fn monte_carlo_validate(
    field: &dyn OccupancyField,
    trajectory: &Trajectory,
    shape: &RobotShape,
    gamma_tilde: &TrackingErrorModel,
    cfg: &ValidationConfig,
) -> ViolationReport {
    let threshold = 1.0 - cfg.delta;
    let region = SampleRegion {
        shape: *shape,
        inflation: 0.0,
    };
    let radii: Vec<f64> = trajectory.v.iter().map(|&v| gamma_tilde.eval(v)).collect();
    let per_trial: Vec<usize> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(cfg.seed, trial as u64);
            let mut bad = 0;
            for (pose, &r) in trajectory.poses.iter().zip(&radii) {
                let mut executed = *pose;
                executed.x += sample_ball(r, &mut rng);
                for _ in 0..cfg.points_per_knot {
                    let x0 = region
                        .sample_uniform(1, &mut rng)
                        .expect("bare ellipsoid sampling cannot degenerate")[0];
                    if field.p_free(&executed.apply_rigid_motion(&x0)) < threshold {
                        bad += 1;
                    }
                }
            }
            bad
        })
        .collect();
    let samples = cfg.n_trials * trajectory.poses.len() * cfg.points_per_knot;
    let violations: usize = per_trial.iter().sum();
    ViolationReport {
        samples,
        violations,
        fraction: if samples == 0 { 0.0 } else { violations as f64 / samples as f64 },
        failed_trials: per_trial.iter().filter(|&&b| b > 0).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{TaskPose, Vec3};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lr(p: &[f64], y: &[u8]) -> LabeledRaster {
        LabeledRaster::new(p.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn perfect_and_all_wrong() {
        let good = lr(&[1.0, 0.0, 1.0], &[1, 0, 1]);
        assert_eq!(pixel_accuracy(&good), 1.0);
        assert_eq!(mean_iou(&good), 1.0);
        assert_eq!(brier_score(&good), 0.0);
        assert!(nll(&good) < 1e-6);
        let bad = lr(&[0.0, 1.0], &[1, 0]);
        assert_eq!(pixel_accuracy(&bad), 0.0);
        assert_eq!(mean_iou(&bad), 0.0);
    }

    #[test]
    fn four_cell_hand_count() {
        let x = lr(&[0.9, 0.6, 0.2, 0.1], &[1, 0, 0, 0]);
        assert_eq!(pixel_accuracy(&x), 0.75);
        let [obs, free] = class_iou(&x);
        assert_abs_diff_eq!(free.iou, 0.5);
        assert_abs_diff_eq!(obs.iou, 2.0 / 3.0);
        assert_abs_diff_eq!(mean_iou(&x), 7.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn tie_counts_as_free_and_absent_class_is_one() {
        let x = lr(&[0.5, 0.5], &[1, 1]);
        assert_eq!(pixel_accuracy(&x), 1.0);
        let [obs, _] = class_iou(&x);
        assert!(obs.absent);
        assert_eq!(mean_iou(&x), 1.0);
    }

    #[test]
    fn single_cell_scores() {
        let x = lr(&[0.5], &[1]);
        assert_eq!(brier_score(&x), 0.25);
        assert_abs_diff_eq!(nll(&x), std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn constant_mean_predictor_gives_label_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<u8> = (0..500).map(|_| u8::from(rng.gen_bool(0.3))).collect();
        let m = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
        let x = LabeledRaster::new(vec![m; y.len()], y.clone()).unwrap();
        assert_abs_diff_eq!(brier_score(&x), m * (1.0 - m), epsilon = 1e-12);
        // the mean also minimizes both scores among constant predictors
        for dp in [-0.05, -0.01, 0.01, 0.05] {
            let o = LabeledRaster::new(vec![m + dp; y.len()], y.clone()).unwrap();
            assert!(brier_score(&o) > brier_score(&x));
            assert!(nll(&o) > nll(&x));
        }
    }

    #[test]
    fn validation_errors() {
        assert_eq!(LabeledRaster::new(vec![], vec![]), Err(MetricsError::Empty));
        assert!(matches!(
            LabeledRaster::new(vec![0.5], vec![2]),
            Err(MetricsError::InvalidLabel { cell: 0, label: 2 })
        ));
        assert!(matches!(
            LabeledRaster::new(vec![1.5], vec![1]),
            Err(MetricsError::InvalidProbability { .. })
        ));
        assert!(matches!(
            LabeledRaster::new(vec![0.5, 0.5], vec![1]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn reliability_edges() {
        let top = reliability(&lr(&[1.0; 5], &[1; 5]));
        assert_eq!(top.bins[9].count, 5);
        assert_eq!(top.bins[9].accuracy, Some(1.0));
        assert_eq!(top.total(), 5);
        assert_eq!(top.bins[0].accuracy, None);
        let half = reliability(&lr(&[0.5; 4], &[1, 0, 1, 0]));
        assert_eq!(half.bins[0].count, 4);
        assert_eq!(half.bins[0].accuracy, Some(0.5));
    }

    #[test]
    fn normalization_maps_max_to_one() {
        let cells = vec![
            CostCell { method: "a".into(), sweep: 0.1, costs: vec![1.0, 3.0] },
            CostCell { method: "b".into(), sweep: 0.1, costs: vec![4.0] },
        ];
        let n = normalized_costs(&cells);
        assert_eq!(n[1].normalized_mean, 1.0);
        assert_eq!(n[0].normalized_mean, 0.5);
        assert_abs_diff_eq!(n[0].std, 2f64.sqrt());
        assert_eq!(n[1].std, 0.0);
    }

    #[test]
    fn single_segment_path_cost() {
        let a = TaskPose::from_xyz_yaw(0.0, 0.0, 0.0, 0.0);
        let b = TaskPose::from_xyz_yaw(1.0, 2.0, 0.0, 0.5);
        assert_eq!(path_cost(&[a, b], 0.3), line_cost(&a, &b, 0.3));
        assert_abs_diff_eq!(path_cost(&[a, b], 0.3), 5.0 + 0.3 * 0.25, epsilon = 1e-12);
    }

    #[test]
    fn free_field_has_no_violations() {
        let f = crate::occupancy::AnalyticField::new(
            &[],
            crate::occupancy::Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)),
        )
        .unwrap();
        let tr = Trajectory {
            t: vec![0.0, 1.0],
            poses: vec![TaskPose::from_xyz_yaw(0.0, 0.0, 0.0, 0.0), TaskPose::from_xyz_yaw(0.2, 0.0, 0.0, 0.0)],
            v: vec![0.2, 0.2],
        };
        let cfg = ValidationConfig {
            n_trials: 50,
            ..ValidationConfig::default()
        };
        let rep = monte_carlo_validate(&f, &tr, &RobotShape::sphere(0.1).unwrap(), &TrackingErrorModel::default(), &cfg);
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.samples, 50 * 2 * 20);
    }
}
