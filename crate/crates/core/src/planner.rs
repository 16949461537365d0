//! SCC-RRT*: RRT* in the 4D task space (position + yaw) whose edge validity
//! is decided by a [`SafetyChecker`], with a squared-length line cost and a
//! yaw penalty.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use kiddo::{KdTree, SquaredEuclidean};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{SafetyChecker, SafetyConfig};
use crate::geometry::{angle_diff, GeometryError, RobotShape, SampleRegion, TaskPose, Vec3};
use crate::occupancy::Aabb;
use crate::rng::PlannerRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("start pose is not delta-safe")]
    UnsafeStart,
    #[error("goal pose is not delta-safe")]
    UnsafeGoal,
    #[error("{0} pose lies outside the workspace bounds")]
    OutOfBounds(&'static str),
    #[error("no path found within {iterations} iterations")]
    NoPathFound { iterations: usize },
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Non-decreasing piecewise-linear bound on the workspace tracking error as
/// a function of reference speed. Beyond the last knot the last segment's
/// slope is continued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingErrorModel {
    knots: Vec<(f64, f64)>,
}

impl TrackingErrorModel {
    pub fn piecewise(knots: Vec<(f64, f64)>) -> Result<Self, PlanError> {
        if knots.is_empty() {
            return Err(PlanError::Config("tracking error model needs at least one knot".into()));
        }
        if knots[0].0 != 0.0 || knots[0].1 < 0.0 {
            return Err(PlanError::Config("first knot must be (0, gamma0 >= 0)".into()));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
                return Err(PlanError::Config(
                    "knots must have increasing speed and non-decreasing error".into(),
                ));
            }
        }
        if knots.iter().any(|(v, g)| !v.is_finite() || !g.is_finite()) {
            return Err(PlanError::Config("knots must be finite".into()));
        }
        Ok(Self { knots })
    }

    /// `gamma(v) = v / v_ref * gamma_ref`.
    pub fn affine(v_ref: f64, gamma_ref: f64) -> Result<Self, PlanError> {
        Self::piecewise(vec![(0.0, 0.0), (v_ref, gamma_ref)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        let k = &self.knots;
        if k.len() == 1 {
            return k[0].1;
        }
        let i = match k.iter().position(|(kv, _)| *kv > v) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => k.len() - 2,
        };
        let (v0, g0) = k[i];
        let (v1, g1) = k[i + 1];
        g0 + (g1 - g0) * (v - v0) / (v1 - v0)
    }

    /// Largest `v` in `[0, v_cap]` with `eval(v) <= d`, by bisection on the
    /// monotone predicate; `0` if even `eval(0) > d`.
    pub fn inverse(&self, d: f64, v_cap: f64) -> f64 {
        if self.eval(v_cap) <= d {
            return v_cap;
        }
        if self.eval(0.0) > d {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, v_cap);
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) <= d {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

impl Default for TrackingErrorModel {
    fn default() -> Self {
        Self::affine(0.2, 0.01).expect("static model")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub delta: f64,
    pub n_x: usize,
    pub delta_p: f64,
    pub n_iter: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub gamma_tilde: TrackingErrorModel,
    /// Weight of the squared yaw change in the line cost.
    pub r: f64,
    /// Steering limit in the weighted metric; defaults to a tenth of the
    /// workspace diagonal.
    pub steer_step: Option<f64>,
    pub goal_bias: f64,
    /// Shrinking-ball constant; derived from the workspace volume if unset.
    pub rewire_radius_factor: Option<f64>,
    pub continuous_cover: bool,
    pub shared_scenarios: bool,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            n_x: 100,
            delta_p: 0.05,
            n_iter: 2000,
            v_min: 0.01,
            v_max: 0.2,
            gamma_tilde: TrackingErrorModel::default(),
            r: 0.05,
            steer_step: None,
            goal_bias: 0.05,
            rewire_radius_factor: None,
            continuous_cover: false,
            shared_scenarios: false,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.v_min > 0.0 && self.v_min <= self.v_max) {
            return Err(PlanError::Config(format!(
                "need 0 < v_min <= v_max, got {} and {}",
                self.v_min, self.v_max
            )));
        }
        if self.n_iter == 0 {
            return Err(PlanError::Config("n_iter must be at least 1".into()));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(PlanError::Config(format!("r must be >= 0, got {}", self.r)));
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return Err(PlanError::Config(format!("goal_bias must lie in [0, 1), got {}", self.goal_bias)));
        }
        if let Some(s) = self.steer_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(PlanError::Config(format!("steer_step must be positive, got {s}")));
            }
        }
        self.safety_config()
            .validate()
            .map_err(|e| PlanError::Config(e.to_string()))
    }

    pub fn safety_config(&self) -> SafetyConfig {
        SafetyConfig {
            delta: self.delta,
            n_x: self.n_x,
            delta_p: self.delta_p,
            continuous_cover: self.continuous_cover,
            shared_scenarios: self.shared_scenarios,
        }
    }

    /// `R0 ⊕ B(gamma(v_min))`, the region certified during planning.
    pub fn sample_region(&self, shape: RobotShape) -> SampleRegion {
        SampleRegion {
            shape,
            inflation: self.gamma_tilde.eval(self.v_min),
        }
    }

    pub fn steer_step_for(&self, bounds: &Aabb) -> f64 {
        self.steer_step.unwrap_or(bounds.diagonal() / 10.0)
    }

    fn rewire_factor_for(&self, bounds: &Aabb) -> f64 {
        self.rewire_radius_factor.unwrap_or_else(|| {
            // gamma* = 2 (1 + 1/d)^(1/d) (mu / zeta_d)^(1/d), d = 4, where the
            // yaw axis is scaled by sqrt(r) as in the metric.
            let mu = bounds.volume() * 2.0 * PI * self.r.max(1e-6).sqrt();
            let zeta4 = PI * PI / 2.0;
            2.0 * 1.25f64.powf(0.25) * (mu / zeta4).powf(0.25)
        })
    }
}

/// Squared position distance plus `r` times the squared shortest-arc yaw change.
pub fn line_cost(p: &TaskPose, q: &TaskPose, r: f64) -> f64 {
    let dphi = angle_diff(p.phi, q.phi);
    (p.x - q.x).norm_squared() + r * dphi * dphi
}

/// Square root of the line cost; used for nearest neighbours and steering.
pub fn task_distance(p: &TaskPose, q: &TaskPose, r: f64) -> f64 {
    line_cost(p, q, r).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Node {
    pose: TaskPose,
    parent: Option<usize>,
    cost: f64,
    children: Vec<usize>,
}

/// RRT* tree; node 0 is the root.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<Node>,
    r: f64,
    /// Poses embedded as `[x, y, z, sqrt(r) * yaw]` with yaw in `[-pi, pi)`.
    index: KdTree<f64, 4>,
}

impl SearchTree {
    pub fn new(root: TaskPose, r: f64) -> Self {
        let mut tree = Self {
            nodes: vec![Node {
                pose: root,
                parent: None,
                cost: 0.0,
                children: Vec::new(),
            }],
            r,
            index: KdTree::new(),
        };
        tree.index.add(&tree.embed(&root), 0);
        tree
    }

    /// A tiny positive scale when `r == 0`; the kd-tree cannot split an
    /// axis whose coordinates are all equal.
    fn yaw_scale(&self) -> f64 {
        self.r.sqrt().max(1e-9)
    }

    fn embed(&self, p: &TaskPose) -> [f64; 4] {
        let yaw = (p.phi + PI).rem_euclid(2.0 * PI) - PI;
        [p.x.x, p.x.y, p.x.z, self.yaw_scale() * yaw]
    }

    /// The query point and its images one yaw period away, so Euclidean
    /// distance in the embedding matches the shortest-arc line cost.
    fn images(&self, p: &TaskPose) -> [[f64; 4]; 3] {
        let q = self.embed(p);
        let period = self.yaw_scale() * 2.0 * PI;
        let shifted = |k: f64| [q[0], q[1], q[2], q[3] + k * period];
        [q, shifted(-1.0), shifted(1.0)]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn pose(&self, i: usize) -> &TaskPose {
        &self.nodes[i].pose
    }

    pub fn cost(&self, i: usize) -> f64 {
        self.nodes[i].cost
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.nodes[i].parent
    }

    /// Ties go to the lower index.
    pub fn nearest(&self, p: &TaskPose) -> usize {
        let mut best = (f64::INFINITY, 0);
        let [q, lo, hi] = self.images(p);
        for (k, img) in [q, lo, hi].iter().enumerate() {
            // an image can only win if the seam is closer than the best so far
            if k > 0 && self.seam_gap(&q, k).powi(2) > best.0 {
                continue;
            }
            let i = self.index.nearest_one::<SquaredEuclidean>(img).item as usize;
            let d = line_cost(&self.nodes[i].pose, p, self.r);
            if d < best.0 || (d == best.0 && i < best.1) {
                best = (d, i);
            }
        }
        best.1
    }

    /// Embedded distance from `q` to the yaw seam crossed by image `k`.
    fn seam_gap(&self, q: &[f64; 4], k: usize) -> f64 {
        let half = self.yaw_scale() * PI;
        // image 1 is shifted down, so it reaches across the upper seam
        if k == 1 {
            half - q[3]
        } else {
            q[3] + half
        }
    }

    /// Indices with line cost at most `radius^2`, ascending.
    pub fn near(&self, p: &TaskPose, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        // slack so embedding round-off never drops a boundary node
        let query = r2 * (1.0 + 1e-9) + 1e-12;
        let [q, lo, hi] = self.images(p);
        let mut out: Vec<usize> = [q, lo, hi]
            .iter()
            .enumerate()
            .filter(|(k, _)| *k == 0 || self.seam_gap(&q, *k).powi(2) <= query)
            .flat_map(|(_, img)| self.index.within_unsorted::<SquaredEuclidean>(img, query))
            .map(|n| n.item as usize)
            .filter(|&i| line_cost(&self.nodes[i].pose, p, self.r) <= r2)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn add(&mut self, pose: TaskPose, parent: usize, cost: f64) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node {
            pose,
            parent: Some(parent),
            cost,
            children: Vec::new(),
        });
        self.nodes[parent].children.push(idx);
        self.index.add(&self.embed(&pose), idx as u64);
        idx
    }

    /// Re-attaches `child` below `parent` and shifts the cost of its subtree.
    fn reparent(&mut self, child: usize, parent: usize, cost: f64) {
        if let Some(old) = self.nodes[child].parent {
            self.nodes[old].children.retain(|&c| c != child);
        }
        self.nodes[child].parent = Some(parent);
        self.nodes[parent].children.push(child);
        let shift = cost - self.nodes[child].cost;
        let mut stack = vec![child];
        while let Some(i) = stack.pop() {
            self.nodes[i].cost += shift;
            stack.extend(self.nodes[i].children.iter().copied());
        }
    }

    /// Cost-to-come recomputed from the root along parent links.
    pub fn recomputed_costs(&self, cost: &dyn Fn(&TaskPose, &TaskPose) -> f64) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.nodes.len()];
        out[0] = 0.0;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            for &c in &self.nodes[i].children {
                out[c] = out[i] + cost(&self.nodes[i].pose, &self.nodes[c].pose);
                stack.push(c);
            }
        }
        out
    }

    /// True if following parents from every node reaches the root without
    /// revisiting a node.
    pub fn is_acyclic(&self) -> bool {
        (0..self.nodes.len()).all(|mut i| {
            let mut steps = 0;
            while let Some(p) = self.nodes[i].parent {
                i = p;
                steps += 1;
                if steps > self.nodes.len() {
                    return false;
                }
            }
            i == 0
        })
    }

    fn branch(&self, mut i: usize) -> Vec<TaskPose> {
        let mut out = vec![self.nodes[i].pose];
        while let Some(p) = self.nodes[i].parent {
            out.push(self.nodes[p].pose);
            i = p;
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCertificate {
    pub checker: String,
    pub n_x: usize,
    pub delta: f64,
    pub inflation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub poses: Vec<TaskPose>,
    pub cost: f64,
    pub certificates: Vec<SegmentCertificate>,
    pub iterations: usize,
    pub tree_size: usize,
    /// Best goal cost after each iteration (`None` before the goal is reached).
    pub cost_history: Vec<Option<f64>>,
}

/// Wall-clock bookkeeping, kept out of [`PathResult`] so results stay
/// reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlanStats {
    pub check_time: Duration,
    pub segment_checks: usize,
}

fn in_bounds(b: &Aabb, p: &TaskPose) -> bool {
    b.contains(&p.x)
}

fn sample_pose(b: &Aabb, rng: &mut PlannerRng) -> TaskPose {
    let x = Vec3::new(
        rng.gen_range(b.min.x..=b.max.x),
        rng.gen_range(b.min.y..=b.max.y),
        rng.gen_range(b.min.z..=b.max.z),
    );
    TaskPose::from_xyz_yaw(x.x, x.y, x.z, rng.gen_range(-PI..PI))
}

fn steer(from: &TaskPose, to: &TaskPose, step: f64, r: f64) -> TaskPose {
    let d = task_distance(from, to, r);
    if d <= step {
        *to
    } else {
        from.lerp(to, step / d)
    }
}

/// Plans with the line cost `line_cost(., ., cfg.r)`.
pub fn plan(
    bounds: &Aabb,
    start: &TaskPose,
    goal: &TaskPose,
    cfg: &PlannerConfig,
    checker: &dyn SafetyChecker,
) -> Result<PathResult, PlanError> {
    let r = cfg.r;
    plan_with_cost(bounds, start, goal, cfg, checker, &|a, b| line_cost(a, b, r)).map(|(res, _)| res)
}

/// Same as [`plan`], also returning collision-check timing.
pub fn plan_timed(
    bounds: &Aabb,
    start: &TaskPose,
    goal: &TaskPose,
    cfg: &PlannerConfig,
    checker: &dyn SafetyChecker,
) -> Result<(PathResult, PlanStats), PlanError> {
    let r = cfg.r;
    plan_with_cost(bounds, start, goal, cfg, checker, &|a, b| line_cost(a, b, r))
}

struct Search {
    tree: SearchTree,
    goal_idx: Option<usize>,
    history: Vec<Option<f64>>,
    stats: PlanStats,
}

/// RRT* with a caller-supplied non-negative line cost. The metric used for
/// steering and neighbourhoods stays the weighted task-space distance.
pub fn plan_with_cost(
    bounds: &Aabb,
    start: &TaskPose,
    goal: &TaskPose,
    cfg: &PlannerConfig,
    checker: &dyn SafetyChecker,
    cost: &dyn Fn(&TaskPose, &TaskPose) -> f64,
) -> Result<(PathResult, PlanStats), PlanError> {
    let s = search(bounds, start, goal, cfg, checker, cost)?;
    let Some(g) = s.goal_idx else {
        return Err(PlanError::NoPathFound {
            iterations: cfg.n_iter,
        });
    };
    let poses = s.tree.branch(g);
    let certificate = SegmentCertificate {
        checker: checker.name().to_string(),
        n_x: cfg.n_x,
        delta: cfg.delta,
        inflation: cfg.gamma_tilde.eval(cfg.v_min),
    };
    Ok((
        PathResult {
            certificates: vec![certificate; poses.len().saturating_sub(1)],
            cost: s.tree.cost(g),
            poses,
            iterations: cfg.n_iter,
            tree_size: s.tree.len(),
            cost_history: s.history,
        },
        s.stats,
    ))
}

/// Runs the search and returns the final tree, whether or not the goal was
/// reached.
pub fn plan_tree(
    bounds: &Aabb,
    start: &TaskPose,
    goal: &TaskPose,
    cfg: &PlannerConfig,
    checker: &dyn SafetyChecker,
) -> Result<SearchTree, PlanError> {
    let r = cfg.r;
    search(bounds, start, goal, cfg, checker, &|a, b| line_cost(a, b, r)).map(|s| s.tree)
}

fn search(
    bounds: &Aabb,
    start: &TaskPose,
    goal: &TaskPose,
    cfg: &PlannerConfig,
    checker: &dyn SafetyChecker,
    cost: &dyn Fn(&TaskPose, &TaskPose) -> f64,
) -> Result<Search, PlanError> {
    cfg.validate()?;
    if !in_bounds(bounds, start) {
        return Err(PlanError::OutOfBounds("start"));
    }
    if !in_bounds(bounds, goal) {
        return Err(PlanError::OutOfBounds("goal"));
    }
    let mut rng = crate::rng::stream_rng(cfg.seed, 0);
    let mut stats = PlanStats::default();
    let check = |a: &TaskPose, b: &TaskPose, rng: &mut PlannerRng, stats: &mut PlanStats| {
        let t0 = Instant::now();
        let ok = checker.segment_safe(a, b, rng);
        stats.check_time += t0.elapsed();
        stats.segment_checks += 1;
        ok
    };
    if !check(start, start, &mut rng, &mut stats) {
        return Err(PlanError::UnsafeStart);
    }
    if !check(goal, goal, &mut rng, &mut stats) {
        return Err(PlanError::UnsafeGoal);
    }

    let step = cfg.steer_step_for(bounds);
    let factor = cfg.rewire_factor_for(bounds);
    let r = cfg.r;
    let mut tree = SearchTree::new(*start, r);
    let mut goal_idx: Option<usize> = None;
    let mut history = Vec::with_capacity(cfg.n_iter);

    for _ in 0..cfg.n_iter {
        let target = if rng.gen::<f64>() < cfg.goal_bias {
            *goal
        } else {
            sample_pose(bounds, &mut rng)
        };
        let nearest = tree.nearest(&target);
        let new_pose = steer(tree.pose(nearest), &target, step, r);
        if task_distance(tree.pose(nearest), &new_pose, r) < 1e-12 {
            history.push(goal_idx.map(|g| tree.cost(g)));
            continue;
        }

        let n = (tree.len() + 1) as f64;
        let radius = (factor * (n.ln() / n).powf(0.25)).min(step);
        let mut near = tree.near(&new_pose, radius);
        if !near.contains(&nearest) {
            near.push(nearest);
        }

        let mut candidates: Vec<(f64, usize)> = near
            .iter()
            .map(|&i| (tree.cost(i) + cost(tree.pose(i), &new_pose), i))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut chosen = None;
        for &(c, i) in &candidates {
            if check(tree.pose(i), &new_pose, &mut rng, &mut stats) {
                chosen = Some((c, i));
                break;
            }
        }
        let Some((new_cost, parent)) = chosen else {
            history.push(goal_idx.map(|g| tree.cost(g)));
            continue;
        };
        let idx = tree.add(new_pose, parent, new_cost);

        if goal_idx.is_none() {
            let to_goal = task_distance(&new_pose, goal, r);
            if to_goal < 1e-12 {
                goal_idx = Some(idx);
            } else if to_goal <= step && check(&new_pose, goal, &mut rng, &mut stats) {
                let c = new_cost + cost(&new_pose, goal);
                goal_idx = Some(tree.add(*goal, idx, c));
            }
        }

        for &j in &near {
            if j == parent || j == idx {
                continue;
            }
            let via = new_cost + cost(&new_pose, tree.pose(j));
            if via < tree.cost(j) - 1e-12 && check(&new_pose, tree.pose(j), &mut rng, &mut stats) {
                tree.reparent(j, idx, via);
            }
        }
        history.push(goal_idx.map(|g| tree.cost(g)));
    }

    Ok(Search {
        tree,
        goal_idx,
        history,
        stats,
    })
}

/// Poses linearly interpolated and parameterized by position arc length on
/// `s in [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    poses: Vec<TaskPose>,
    cumulative: Vec<f64>,
}

impl Path {
    pub fn new(poses: Vec<TaskPose>) -> Result<Self, PlanError> {
        if poses.is_empty() {
            return Err(PlanError::Config("path needs at least one pose".into()));
        }
        let mut cumulative = Vec::with_capacity(poses.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in poses.windows(2) {
            acc += (w[1].x - w[0].x).norm();
            cumulative.push(acc);
        }
        Ok(Self { poses, cumulative })
    }

    pub fn poses(&self) -> &[TaskPose] {
        &self.poses
    }

    /// Total position length, which is also `|pi'(s)|` for every `s`.
    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn pose_at(&self, s: f64) -> TaskPose {
        let s = s.clamp(0.0, 1.0);
        let n = self.poses.len();
        if n == 1 {
            return self.poses[0];
        }
        let total = self.length();
        if total == 0.0 {
            // pure rotation: fall back to index parameterization
            let u = s * (n - 1) as f64;
            let i = (u.floor() as usize).min(n - 2);
            return self.poses[i].lerp(&self.poses[i + 1], u - i as f64);
        }
        if s == 1.0 {
            return self.poses[n - 1];
        }
        let target = s * total;
        let i = match self.cumulative.partition_point(|&c| c <= target) {
            0 => 0,
            k => (k - 1).min(n - 2),
        };
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        if seg == 0.0 {
            return self.poses[i + 1];
        }
        self.poses[i].lerp(&self.poses[i + 1], (target - self.cumulative[i]) / seg)
    }

    pub fn cost(&self, r: f64) -> f64 {
        self.poses.windows(2).map(|w| line_cost(&w[0], &w[1], r)).sum()
    }
}

/// Arc-length-uniform resampling of a planned path to `k` poses.
pub fn interpolate_path(result: &PathResult, k: usize) -> Result<Path, PlanError> {
    resample(&Path::new(result.poses.clone())?, k)
}

pub fn resample(path: &Path, k: usize) -> Result<Path, PlanError> {
    if k < 2 {
        return Err(PlanError::Config(format!("need at least 2 poses, got {k}")));
    }
    let n = path.poses.len();
    let poses = (0..k)
        .map(|i| {
            if i == 0 {
                path.poses[0]
            } else if i == k - 1 {
                path.poses[n - 1]
            } else {
                path.pose_at(i as f64 / (k - 1) as f64)
            }
        })
        .collect();
    Path::new(poses)
}
