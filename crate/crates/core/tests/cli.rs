//! End-to-end tests of the `shapemap` binary.

use std::path::Path;
use std::process::{Command, Output};

use shapemap::io;
use shapemap::pipeline;
use shapemap::{JointPose, Trajectory};

fn shapemap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapemap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = shapemap(args, cwd);
    assert!(
        out.status.success(),
        "shapemap {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = shapemap(args, cwd);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn build_map(dir: &Path) {
    ok(&["map-build", "--seed", "3", "--out", "map.json"], dir);
}

fn write_step_trajectory(dir: &Path, to: [f64; 2]) -> Trajectory {
    let traj = Trajectory::step(&[0.0, 0.0], &to, 100.0, 0.0, 0.5, 4.0).unwrap();
    std::fs::write(dir.join("traj.csv"), io::write_trajectory_csv(&traj)).unwrap();
    traj
}

#[test]
fn identify_finds_both_modes_of_a_simulated_step() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--step-to", "45,60", "--trace-out", "trace.csv"], d);
    let out = ok(&["identify", "trace.csv", "--csv"], d);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 2);
    let f: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!((f[0] - 1.9).abs() < 0.05, "{f:?}");
    assert!((f[1] - 3.8).abs() < 0.05, "{f:?}");

    let text = ok(&["identify", "trace.csv", "--estimate-k0"], d);
    assert!(text.starts_with("mode 1: 1.9"), "{text}");
    assert!(text.contains("k0"));
}

#[test]
fn identify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut zero = String::from("# motion_end_s=0\ntime_s,accel\n");
    for i in 0..1000 {
        zero.push_str(&format!("{},0\n", i as f64 / 100.0));
    }
    std::fs::write(d.join("zero.csv"), &zero).unwrap();
    assert_eq!(exit_code(&["identify", "zero.csv"], d).0, 2);

    let truncated = &zero[..zero.len() - 3];
    std::fs::write(d.join("cut.csv"), truncated).unwrap();
    let (code, err) = exit_code(&["identify", "cut.csv"], d);
    assert_eq!(code, 1);
    assert!(err.contains("line"), "{err}");

    assert_eq!(exit_code(&["identify", "missing.csv"], d).0, 1);
}

#[test]
fn map_build_from_directory_names_missing_pose() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["map-build", "--export-traces", "traces", "--out", "sim_map.json"], d);
    ok(&["map-build", "--traces", "traces", "--out", "dir_map.json"], d);
    assert_eq!(
        std::fs::read(d.join("sim_map.json")).unwrap().len(),
        std::fs::read(d.join("dir_map.json")).unwrap().len()
    );

    std::fs::remove_file(d.join("traces").join(pipeline::trace_file_name(&JointPose::from([30.0, 60.0])))).unwrap();
    let (code, err) = exit_code(&["map-build", "--traces", "traces", "--out", "m.json"], d);
    assert_eq!(code, 1);
    assert!(err.contains("(30, 60)"), "{err}");
    assert!(!d.join("m.json").exists());
}

#[test]
fn map_file_round_trips_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    build_map(dir.path());
    let text = std::fs::read_to_string(dir.path().join("map.json")).unwrap();
    let map = io::parse_map(&text).unwrap();
    assert_eq!(map.to_json().unwrap(), text);
}

#[test]
fn map_query_reports_frequency_and_delay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build_map(d);
    let rows = csv_rows(&ok(&["map-query", "map.json", "--pose", "45,60", "--csv"], d));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let f: f64 = r[1].parse().unwrap();
        let t0: f64 = r[2].parse().unwrap();
        assert!((t0 - 0.5 / f).abs() < 1e-12);
        assert_eq!(r[4], "false");
    }
    assert_eq!(exit_code(&["map-query", "map.json", "--pose", "120,45"], d).0, 1);
    let rows = csv_rows(&ok(
        &["map-query", "map.json", "--pose", "120,45", "--extrapolate", "--csv"],
        d,
    ));
    assert_eq!(rows[0][4], "true");
}

#[test]
fn shape_adds_half_periods_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build_map(d);
    let traj = write_step_trajectory(d, [45.0, 60.0]);

    let text = ok(&["shape", "--map", "map.json", "--trajectory", "traj.csv", "--out", "shaped.csv"], d);
    let map = io::parse_map(&std::fs::read_to_string(d.join("map.json")).unwrap()).unwrap();
    let pose = JointPose::from([45.0, 60.0]);
    let f1 = map.interpolate(&pose, 0).unwrap();
    let f2 = map.interpolate(&pose, 1).unwrap();
    let expected = 0.5 / f1 + 0.5 / f2;
    let printed: f64 = text
        .trim()
        .strip_prefix("total added delay: ")
        .and_then(|s| s.strip_suffix(" s"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((printed - expected).abs() < 1e-6);

    let shaped = std::fs::read_to_string(d.join("shaped.csv")).unwrap();
    let seq = pipeline::shaper_for_pose(&map, &pose, &[0, 1], false).unwrap();
    assert_eq!(shaped, io::write_trajectory_csv(&seq.apply(&traj).unwrap()));
    let back = io::parse_trajectory_csv(&shaped).unwrap();
    assert!((back.len() - traj.len()) as f64 - expected * 100.0 <= 1.0);
}

#[test]
fn shape_with_no_modes_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build_map(d);
    write_step_trajectory(d, [45.0, 60.0]);
    ok(
        &["shape", "--map", "map.json", "--trajectory", "traj.csv", "--modes", "none", "--out", "same.csv"],
        d,
    );
    assert_eq!(
        std::fs::read(d.join("same.csv")).unwrap(),
        std::fs::read(d.join("traj.csv")).unwrap()
    );
}

#[test]
fn shape_outside_grid_needs_extrapolate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build_map(d);
    write_step_trajectory(d, [120.0, 45.0]);
    let (code, err) = exit_code(&["shape", "--map", "map.json", "--trajectory", "traj.csv"], d);
    assert_eq!(code, 1);
    assert!(err.contains("120"), "{err}");
    ok(&["shape", "--map", "map.json", "--trajectory", "traj.csv", "--extrapolate"], d);
}

#[test]
fn verify_reports_reductions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    build_map(d);
    let rows = csv_rows(&ok(
        &["verify", "--map", "map.json", "--position", "A=45,45", "--position", "B=15,15", "--csv"],
        d,
    ));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "A");
    for r in &rows {
        let reduction: f64 = r[5].parse().unwrap();
        assert!(reduction > 83.3, "{r:?}");
    }
    let empty = ok(&["verify", "--map", "map.json", "--csv"], d);
    assert_eq!(csv_rows(&empty).len(), 0);
}

#[test]
fn bode_has_notches_at_odd_harmonics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text = ok(
        &["bode", "--freq", "1.7", "--f-min", "0.1", "--f-max", "13", "--n-points", "12901"],
        d,
    );
    let points: Vec<(f64, f64)> = csv_rows(&text)
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    let minima: Vec<f64> = points
        .windows(3)
        .filter(|w| w[1].1 < w[0].1 && w[1].1 < w[2].1 && w[1].1 < -40.0)
        .map(|w| w[1].0)
        .collect();
    assert_eq!(minima.len(), 4, "{minima:?}");
    for (m, expected) in minima.iter().zip([1.7, 5.1, 8.5, 11.9]) {
        assert!((m - expected).abs() < 2e-3, "{m} vs {expected}");
    }

    let flat = ok(&["bode", "--f-min", "0.1", "--f-max", "10", "--n-points", "50"], d);
    assert!(csv_rows(&flat).iter().all(|r| r[1].parse::<f64>().unwrap() == 0.0));

    let same = ok(&["bode", "--t0", "0.25", "--n-points", "20"], d);
    let by_freq = ok(&["bode", "--freq", "2", "--n-points", "20"], d);
    assert_eq!(same, by_freq);
}

#[test]
fn bad_arguments_exit_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(exit_code(&["bode", "--freq", "-1"], d).0, 1);
    assert_eq!(exit_code(&["bode", "--t0", "0.2", "--k0", "1.5"], d).0, 1);
    assert_eq!(exit_code(&["simulate"], d).0, 1);
    assert_eq!(exit_code(&["verify", "--map", "nope.json"], d).0, 1);
}
