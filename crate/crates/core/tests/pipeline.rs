use scc_core::collision::ScenarioChecker;
use scc_core::occupancy::Aabb;
use scc_core::planner::{interpolate_path, plan, PlannerConfig};
use scc_core::rng::stream_rng;
use scc_core::velocity::{max_velocity, schedule, time_parameterize, unsafe_distance_at, ScheduleConfig};
use scc_core::{AnalyticField, Obstacle, OccupancyField, RobotShape, Shape, TaskPose, Uncertainty, Vec3};

fn sphere_field(d_stop: f64) -> AnalyticField {
    let o = Obstacle::new(
        Shape::sphere(Vec3::new(1.0, 0.0, 0.0), 0.3).unwrap(),
        Uncertainty::DStop(d_stop),
    )
    .unwrap();
    AnalyticField::new(&[o], Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(3.0, 1.0, 1.0))).unwrap()
}

#[test]
fn clearance_grows_with_delta() {
    let field = sphere_field(0.2);
    let shape = RobotShape::sphere(0.1).unwrap();
    let pose = TaskPose::from_xyz_yaw(0.3, 0.0, 0.0, 0.0);
    let mut prev = 0.0;
    for delta in [0.01, 0.05, 0.2, 0.5, 0.9] {
        // saturation at gamma(6) = 0.3 keeps the contact in range
        let cfg = ScheduleConfig {
            delta,
            v_max: 6.0,
            ..ScheduleConfig::default()
        };
        let d = unsafe_distance_at(&field, &pose, &shape, &cfg).unwrap();
        assert!(d + 1e-9 >= prev, "delta {delta}: {d} < {prev}");
        // robot surface at x = 0.4, unsafe set ends at 0.7 - 0.2 * (1 - delta)
        let expected = 0.3 - 0.2 * (1.0 - delta);
        assert!((d - expected).abs() < 1e-3, "delta {delta}: {d} vs {expected}");
        prev = d;
    }
}

#[test]
fn max_velocity_is_monotone_in_clearance() {
    let cfg = ScheduleConfig::default();
    let mut prev = 0.0;
    for i in 0..=50 {
        let d = i as f64 * 4e-4;
        let v = max_velocity(d, &cfg.gamma_tilde, cfg.v_max);
        assert!(v >= prev && v <= cfg.v_max);
        assert!(cfg.gamma_tilde.eval(v) <= d + 1e-12);
        prev = v;
    }
}

#[test]
fn plans_around_sphere_and_schedules() {
    let field = sphere_field(0.1);
    let shape = RobotShape::sphere(0.05).unwrap();
    let cfg = PlannerConfig {
        n_iter: 1500,
        steer_step: Some(0.4),
        seed: 3,
        ..PlannerConfig::default()
    };
    let start = TaskPose::from_xyz_yaw(0.0, 0.0, 0.0, 0.0);
    let goal = TaskPose::from_xyz_yaw(2.0, 0.0, 0.0, 0.5);
    let mut rng = stream_rng(cfg.seed, 1);
    let checker =
        ScenarioChecker::new(&field, cfg.sample_region(shape), cfg.safety_config(), &mut rng).unwrap();
    let res = plan(&field.bounds(), &start, &goal, &cfg, &checker).unwrap();
    assert_eq!(res.poses.first(), Some(&start));
    assert_eq!(res.poses.last(), Some(&goal));
    assert_eq!(res.certificates.len(), res.poses.len() - 1);

    let path = interpolate_path(&res, 101).unwrap();
    let sched = ScheduleConfig::default();
    for p in path.poses() {
        assert!(field.p_free(&p.x) >= 1.0 - cfg.delta);
    }
    let profile = schedule(&field, &path, &shape, &sched, 100).unwrap();
    assert!(profile.violations.is_empty(), "{:?}", profile.violations);
    let tr = time_parameterize(&path, &profile).unwrap();
    assert!(tr.duration() >= path.length() / sched.v_max - 1e-9);
    assert!(tr.t.windows(2).all(|w| w[1] >= w[0]));
}
