use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TRUTH: &str = "0.08,-0.06,0.04,0.012,-0.025,0.018";
const TRUTH_PLUS_X: &str = "0.13,-0.06,0.04,0.012,-0.025,0.018";

fn l2e(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l2e"))
        .args(args)
        .env("L2E_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = l2e(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.to_str().unwrap();
    let mut args = vec!["synth", "--out", out];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("manifest.txt")
}

/// `(scene_id, n, mi)` rows and the mean.
fn table(stdout: &str) -> (Vec<(String, u64, f64)>, f64) {
    let mut rows = Vec::new();
    let mut mean = f64::NAN;
    for line in stdout.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "mean" {
            mean = f[2].parse().unwrap();
        } else {
            rows.push((f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap()));
        }
    }
    (rows, mean)
}

fn read_ppm(path: &Path) -> (usize, usize, Vec<[u8; 3]>) {
    let bytes = fs::read(path).unwrap();
    let mut parts = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'\n' {
            parts.push(String::from_utf8(bytes[start..i].to_vec()).unwrap());
            start = i + 1;
            if parts.len() == 3 {
                break;
            }
        }
    }
    assert_eq!(parts[0], "P6");
    let dims: Vec<usize> = parts[1].split(' ').map(|v| v.parse().unwrap()).collect();
    let pixels = bytes[start..].chunks(3).map(|c| [c[0], c[1], c[2]]).collect::<Vec<_>>();
    assert_eq!(pixels.len(), dims[0] * dims[1]);
    (dims[0], dims[1], pixels)
}

fn is_gray(p: &[u8; 3]) -> bool {
    p[0] == p[1] && p[1] == p[2]
}

#[test]
fn evaluate_prefers_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--scenes", "3", "--points", "5000"]);
    let m = m.to_str().unwrap();
    let (rows, at_truth) = table(&ok(&["evaluate", "--manifest", m, "--theta", TRUTH]));
    assert_eq!(rows.len(), 3);
    let (_, off) = table(&ok(&["evaluate", "--manifest", m, "--theta", TRUTH_PLUS_X]));
    assert!(at_truth > off, "{at_truth} vs {off}");

    // nothing in front of the camera: every scene reports the sentinel
    let (rows, mean) = table(&ok(&["evaluate", "--manifest", m, "--theta", "0,0,-100,0,0,0"]));
    assert!(rows.iter().all(|r| r.1 == 0 && r.2 == 0.0));
    assert_eq!(mean, 0.0);
}

#[test]
fn single_scene_mean_equals_row() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--scenes", "1", "--points", "3000"]);
    let (rows, mean) = table(&ok(&["evaluate", "--manifest", m.to_str().unwrap(), "--theta", TRUTH]));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].2, mean);
}

#[test]
fn empty_manifest_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--scenes", "1", "--points", "1000"]);
    fs::write(&m, "intrinsics = intrinsics.txt\n").unwrap();
    let out = l2e(&["calibrate", "--manifest", m.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no scenes"));
}

#[test]
fn bad_flags_exit_with_usage_code() {
    assert_eq!(l2e(&["evaluate", "--manifest", "x", "--theta", "1,2"]).status.code(), Some(2));
    assert_eq!(l2e(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unreadable_scene_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--scenes", "1", "--points", "1000"]);
    fs::write(dir.path().join("synth-000.events.csv"), "1,2,3,7\n").unwrap();
    let out = l2e(&["evaluate", "--manifest", m.to_str().unwrap(), "--theta", TRUTH]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("polarity"));
}

#[test]
fn calibrate_recovers_truth_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--scenes", "4", "--points", "8000"]);
    let m = m.to_str().unwrap();
    let run = |out: &Path| {
        ok(&[
            "calibrate",
            "--manifest",
            m,
            "--seed",
            "0.1,-0.08,0.06,0.02,-0.04,0.03",
            "--out",
            out.to_str().unwrap(),
        ]);
        fs::read_to_string(out.join("result.txt")).unwrap()
    };
    let (a, b) = (run(&dir.path().join("a")), run(&dir.path().join("b")));
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with("wall_time_s")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&a), strip(&b));

    let value = |key: &str| -> f64 {
        a.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    let truth: Vec<f64> = TRUTH.split(',').map(|v| v.parse().unwrap()).collect();
    for (i, key) in ["x", "y", "z", "v1", "v2", "v3"].iter().enumerate() {
        assert!((value(key) - truth[i]).abs() < 0.01, "{key}: {}", value(key));
    }
    let log = fs::read_to_string(dir.path().join("a/calibration.log")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("iter")));
}

#[test]
fn overlay_coincides_with_events_at_truth() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--scenes", "1", "--points", "4000", "--noiseless"]);
    let m = m.to_str().unwrap();
    let render = |theta: &str, name: &str| {
        let path = dir.path().join(name);
        ok(&[
            "project", "--manifest", m, "--sigma", "0", "--scene", "synth-000", "--theta", theta, "--out",
            path.to_str().unwrap(),
        ]);
        read_ppm(&path)
    };
    let (_, _, events) = render("0,0,-100,0,0,0", "events.ppm");
    assert!(events.iter().all(is_gray));
    let coincidence = |theta: &str, name: &str| {
        let (_, _, image) = render(theta, name);
        let colored: Vec<usize> = (0..image.len()).filter(|&i| !is_gray(&image[i])).collect();
        assert!(!colored.is_empty());
        colored.iter().filter(|&&i| events[i][0] > 0).count() as f64 / colored.len() as f64
    };
    let at_truth = coincidence(TRUTH, "truth.ppm");
    assert_eq!(at_truth, 1.0);
    let off = coincidence("0.18,-0.06,0.04,0.012,-0.025,0.018", "off.ppm");
    assert!(off < at_truth, "{off}");
}

#[test]
fn overlay_on_empty_map_is_black() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--scenes", "1", "--points", "2000"]);
    fs::write(dir.path().join("synth-000.events.csv"), "t_us,x,y,p\n").unwrap();
    let path = dir.path().join("o.ppm");
    ok(&[
        "project", "--manifest", m.to_str().unwrap(), "--scene", "synth-000", "--theta", TRUTH, "--out",
        path.to_str().unwrap(),
    ]);
    let (_, _, image) = read_ppm(&path);
    assert!(image.iter().all(|p| !is_gray(p) || *p == [0, 0, 0]));
    assert!(image.iter().any(|p| !is_gray(p)));

    let out = l2e(&[
        "project", "--manifest", m.to_str().unwrap(), "--scene", "nope", "--theta", TRUTH,
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scaling_experiment_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--scenes", "4", "--points", "2000"]);
    let out = dir.path().join("report");
    ok(&[
        "experiment", "--manifest", m.to_str().unwrap(), "--kind", "scene-scaling", "--sizes", "1,2,4", "--runs", "3",
        "--seed", TRUTH, "--out", out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("scene_scaling.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(fs::read_to_string(out.join("scene_scaling.txt")).unwrap().contains("R^2"));
}

#[test]
fn noise_robustness_experiment_runs() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--scenes", "2", "--points", "3000"]);
    let out = dir.path().join("report");
    ok(&[
        "experiment", "--manifest", m.to_str().unwrap(), "--kind", "noise-robustness", "--runs", "2",
        "--noise-trans", "0.01", "--noise-rot", "0.01", "--seed", TRUTH, "--out", out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("noise_robustness.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
