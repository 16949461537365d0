use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scc_cli::exit;

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(rel)
}

fn scc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scc"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("spawn scc")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn records(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|x| x.unwrap()[i].to_string()).collect()
}

#[test]
fn plan_is_reproducible_and_validates() {
    let scene = corpus("scenes/empty.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = scc(&["plan", "--scene", scene.to_str().unwrap(), "--seed", "7"], d.path());
        assert_eq!(code(&o), exit::OK, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["result.json", "waypoints.csv", "path.csv", "profile.csv", "trajectory.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert_eq!(records(&a.path().join("path.csv")).len(), 101);

    let o = scc(
        &["validate", "--scene", scene.to_str().unwrap(), "--trials", "200"],
        a.path(),
    );
    assert_eq!(code(&o), exit::OK);
    assert!(String::from_utf8_lossy(&o.stdout).contains("violations 0 "));
}

#[test]
fn inflated_tracking_error_fails_validation() {
    let scene = corpus("scenes/cluttered.toml");
    let d = tempfile::tempdir().unwrap();
    let o = scc(&["plan", "--scene", scene.to_str().unwrap(), "--seed", "1"], d.path());
    assert_eq!(code(&o), exit::OK, "{}", String::from_utf8_lossy(&o.stderr));
    let s = scene.to_str().unwrap();
    let args = ["validate", "--scene", s, "--trials", "300", "--threshold", "1e-5"];
    let ok = scc(&args, d.path());
    assert_eq!(code(&ok), exit::OK, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("violations 0 "));
    let bad = scc(&[&args[..], &["--gamma-scale", "50"]].concat(), d.path());
    assert_eq!(code(&bad), exit::VALIDATION_FAILED, "{}", String::from_utf8_lossy(&bad.stdout));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let goal = corpus("scenes/goal_in_obstacle.toml");
    assert_eq!(
        code(&scc(&["plan", "--scene", goal.to_str().unwrap()], d.path())),
        exit::UNSAFE_GOAL
    );

    let bad = d.path().join("bad.toml");
    fs::write(&bad, "schema_version = 1\n[workspace]\nmin = [0, 0]\n").unwrap();
    let o = scc(&["plan", "--scene", bad.to_str().unwrap()], d.path());
    assert_eq!(code(&o), exit::INVALID_INPUT);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml"));

    let missing = d.path().join("nope.toml");
    assert_eq!(
        code(&scc(&["plan", "--scene", missing.to_str().unwrap()], d.path())),
        exit::FAILURE
    );
    assert_eq!(code(&scc(&["plan"], d.path())), 2);
}

fn write_raster(path: &Path, dims: [usize; 3], values: &[f32]) {
    let body: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    fs::write(
        path,
        format!(
            "dims {} {} {}\norigin 0 0 0\ncell_size 0.1\nvalues\n{}\n",
            dims[0],
            dims[1],
            dims[2],
            body.join(" ")
        ),
    )
    .unwrap();
}

#[test]
fn metrics_rows_match_hand_values() {
    let d = tempfile::tempdir().unwrap();
    let (a, b, t) = (d.path().join("a.txt"), d.path().join("b.txt"), d.path().join("t.txt"));
    write_raster(&a, [2, 1, 1], &[0.9, 0.2]);
    write_raster(&b, [2, 1, 1], &[0.7, 0.4]);
    write_raster(&t, [2, 1, 1], &[1.0, 0.0]);
    let o = scc(
        &["metrics", "--pred", a.to_str().unwrap(), b.to_str().unwrap(), "--truth", t.to_str().unwrap()],
        d.path(),
    );
    assert_eq!(code(&o), exit::OK, "{}", String::from_utf8_lossy(&o.stderr));

    let m = d.path().join("metrics.csv");
    assert_eq!(column(&m, "name"), ["member_0", "member_1", "ensemble"]);
    let brier: Vec<f64> = column(&m, "brier").iter().map(|s| s.parse().unwrap()).collect();
    let nll: Vec<f64> = column(&m, "nll").iter().map(|s| s.parse().unwrap()).collect();
    let expect = |p_free: f64, p_obs_free: f64| {
        let bs = ((1.0 - p_free).powi(2) + p_obs_free.powi(2)) / 2.0;
        let nl = -(p_free.ln() + (1.0 - p_obs_free).ln()) / 2.0;
        (bs, nl)
    };
    for (i, (p, q)) in [(0.9, 0.2), (0.7, 0.4), (0.8, 0.3)].into_iter().enumerate() {
        let (bs, nl) = expect(p, q);
        assert!((brier[i] - bs).abs() < 1e-6, "row {i}: {} vs {bs}", brier[i]);
        assert!((nll[i] - nl).abs() < 1e-6, "row {i}: {} vs {nl}", nll[i]);
    }
    for pa in column(&m, "pixel_accuracy") {
        assert_eq!(pa.parse::<f64>().unwrap(), 1.0);
    }
    assert!(d.path().join("reliability.csv").exists());

    // identical members: the ensemble row equals each member row
    let o = scc(
        &["metrics", "--pred", a.to_str().unwrap(), a.to_str().unwrap(), "--truth", t.to_str().unwrap()],
        d.path(),
    );
    assert_eq!(code(&o), exit::OK);
    let rows = records(&m);
    assert_eq!(rows[0].iter().skip(1).collect::<Vec<_>>(), rows[2].iter().skip(1).collect::<Vec<_>>());

    let wide = d.path().join("wide.txt");
    write_raster(&wide, [3, 1, 1], &[0.5, 0.5, 0.5]);
    let o = scc(
        &["metrics", "--pred", wide.to_str().unwrap(), "--truth", t.to_str().unwrap()],
        d.path(),
    );
    assert_eq!(code(&o), exit::INVALID_INPUT);
}

#[test]
fn smoke_benchmark_writes_one_row_per_run() {
    let d = tempfile::tempdir().unwrap();
    let spec = corpus("specs/smoke.toml");
    let o = scc(&["benchmark", "--spec", spec.to_str().unwrap(), "--seed", "2"], d.path());
    assert_eq!(code(&o), exit::OK, "{}", String::from_utf8_lossy(&o.stderr));
    let raw = d.path().join("benchmark_raw.csv");
    assert_eq!(records(&raw).len(), 3);
    assert!(column(&raw, "status").iter().all(|s| s == "ok"));
    assert_eq!(records(&d.path().join("benchmark_summary.csv")).len(), 1);
}
