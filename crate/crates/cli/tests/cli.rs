use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ecam_cli::raster::read_raster;
use ecam_cli::report::{parse_csv, CSV_HEADER};
use ecam_cli::Method;

const SMALL: &[&str] = &["--rows", "16", "--cols", "16", "--max-iters", "30"];

fn ecam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecam")).args(args).output().unwrap()
}

fn ecam_in(dir: &Path, sub: &str, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ecam(&args)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_then_edge_then_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ecam_in(d, "simulate", &["--object", "up_arrow", "--rate", "0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["measurement.decr", "mask.decr", "psf.decr", "object.decr", "object.pgm"] {
        assert!(d.join(name).exists(), "{name}");
    }
    let mask = read_raster(&d.join("mask.decr")).unwrap();
    assert_eq!(mask.shape(), (32, 32));
    assert_eq!(mask.sum(), 512.0);

    for sub in ["edge", "baseline"] {
        let out = ecam_in(d, sub, &["--object", "up_arrow"]);
        assert!(out.status.success(), "{sub}: {}", stderr(&out));
    }
    assert!(d.join("edge_diffuser_ecam.pgm").exists());
    assert!(d.join("edge_post_processing.decr").exists());
    let rows = parse_csv(&fs::read_to_string(d.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].method, Method::DiffuserEcam);
    assert_eq!(rows[1].method, Method::PostProcessing);
    assert!(rows.iter().all(|r| r.sampling_rate == 0.5 && r.psnr_db.is_finite()));
}

#[test]
fn psf_command_writes_normalized_psf() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecam_in(dir.path(), "psf", &["--seed", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let psf = read_raster(&dir.path().join("psf.decr")).unwrap();
    assert!((psf.sum() - 1.0).abs() < 1e-12);
    assert!(psf.min() >= 0.0);
    let meta = fs::read_to_string(dir.path().join("psf.meta")).unwrap();
    assert!(meta.contains("config_digest = "));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(ecam(&["teleport"]).status.code(), Some(1));
    assert_eq!(ecam(&["edge", "--no-such-key", "3"]).status.code(), Some(1));
    assert_eq!(ecam(&["config", "--rows", "banana"]).status.code(), Some(1));
    let out = ecam(&["sweep", "--psf-file", "/nonexistent/psf.decr"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("does not exist"));
    assert_eq!(ecam(&["--help"]).status.code(), Some(0));
}

#[test]
fn corrupt_measurement_exits_two_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(ecam_in(d, "simulate", &[]).status.success());
    let path = d.join("measurement.decr");
    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(12 + 8 * 5 + 3);
    fs::write(&path, bytes).unwrap();
    let out = ecam_in(d, "edge", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("byte offset 52"), "{}", stderr(&out));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    fs::write(&file, "# sweep settings\nseed = 5\nrates = 0.3, 0.6\nepsilon = 0.01\n").unwrap();
    let out = ecam(&["config", "--config", file.to_str().unwrap(), "--seed", "7", "--tau", "0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 7\n"));
    assert!(text.contains("rates = 0.3,0.6\n"));
    assert!(text.contains("epsilon = 0.01\n"));
    assert!(text.contains("tau = 0.5\n"));
    fs::write(&file, "seed 5\n").unwrap();
    assert_eq!(ecam(&["config", "--config", file.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn small_sweep_is_sorted_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = ["--objects", "three_stripes,letter_T", "--rates", "0.9,0.4"];
    for d in [a.path(), b.path()] {
        let out = ecam_in(d, "sweep", &extra);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let csv = fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    let rows = parse_csv(&csv).unwrap();
    let keys: Vec<(String, Method, f64)> = rows.iter().map(|r| (r.object_id.clone(), r.method, r.sampling_rate)).collect();
    assert_eq!(keys.len(), 8);
    let mut sorted = keys.clone();
    sorted.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.total_cmp(&y.2)));
    assert_eq!(keys, sorted);
    assert_eq!(keys[0].0, "letter_T");
    assert_eq!(csv, fs::read_to_string(b.path().join("sweep.csv")).unwrap());
    assert_eq!(
        fs::read(a.path().join("grid_rate_0.400000.pgm")).unwrap(),
        fs::read(b.path().join("grid_rate_0.400000.pgm")).unwrap()
    );
    let meta = fs::read_to_string(a.path().join("sweep.meta")).unwrap();
    for key in ["global_seed = 1", "psf_seed = ", "config_digest = ", "mask_seed.letter_T.0.400000 = ", "spearman."] {
        assert!(meta.contains(key), "{key}");
    }
}

#[test]
fn rolling_writes_frames_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ecam(&[
        "rolling",
        "--out-dir",
        d.to_str().unwrap(),
        "--rows",
        "32",
        "--cols",
        "32",
        "--frames",
        "4",
        "--max-iters",
        "30",
        "--velocity-x",
        "0.1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let traj = fs::read_to_string(d.join("rolling/trajectory.csv")).unwrap();
    let lines: Vec<&str> = traj.lines().collect();
    assert_eq!(lines[0], "frame,time_ms,centroid_row,centroid_col,true_row,true_col");
    assert_eq!(lines.len(), 5);
    for k in 0..4 {
        assert!(d.join(format!("rolling/frame_{k:02}.decr")).exists());
        assert!(d.join(format!("rolling/frame_{k:02}.pgm")).exists());
    }
    let frame = read_raster(&d.join("rolling/frame_00.decr")).unwrap();
    assert_eq!(frame.shape(), (32, 32));
}

#[test]
fn object_leaving_the_grid_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecam_in(dir.path(), "rolling", &["--velocity-x", "5"]);
    assert_eq!(out.status.code(), Some(2));
}
