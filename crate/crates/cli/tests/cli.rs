use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nschannel(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nschannel"));
    cmd.args(args).env_remove("NSCHANNEL_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("NSCHANNEL_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SHEAR: &str = r#"{
  "grid": {"nx": 8, "ny": 8, "nz": 17},
  "nu": 1.0,
  "solver": {"dt": 1e-3, "t_end": 0.05, "output_every": 5},
  "initial": {"kind": "shear", "mode": 1, "amplitude": 1.0},
  "output": {"checkpoint_every": 4}
}"#;

#[test]
fn shear_run_writes_artifacts_and_monotone_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHEAR);
    let out = tmp.path().join("out");
    let o = nschannel(&["run", "--config", &cfg], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("all enabled bounds held: yes"), "{stdout}");

    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# nschannel "));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let e_col = header.iter().position(|h| *h == "E").unwrap();
    let e: Vec<f64> = lines
        .map(|l| l.split(',').nth(e_col).unwrap().parse().unwrap())
        .collect();
    assert!(e.len() > 5);
    assert!(e.windows(2).all(|w| w[1] <= w[0]));

    let bounds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("bounds.json")).unwrap()).unwrap();
    assert_eq!(bounds["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(bounds["config_sha256"].as_str().unwrap().len(), 64);
    assert!(out.join("final.ckpt").exists());
    assert!(fs::read_dir(&out)
        .unwrap()
        .any(|e| e.unwrap().file_name().to_str().unwrap().starts_with("step_")));

    let o = nschannel(&["report", "--in", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("report.txt").exists());
    assert!(out.join("plot_diagnostics.dat").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SHEAR.replace(
        r#""initial": {"kind": "shear", "mode": 1, "amplitude": 1.0}"#,
        r#""seed": 7, "initial": {"kind": "perturbed_shear", "perturbation": 0.2}"#,
    );
    let cfg = write_config(tmp.path(), &body);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = nschannel(&["run", "--config", &cfg], Some(dir));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["diagnostics.csv", "bounds.json", "final.ckpt"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn cfl_violation_is_a_numerical_abort() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SHEAR
        .replace(r#""amplitude": 1.0"#, r#""amplitude": 100.0"#)
        .replace(r#""dt": 1e-3"#, r#""dt": 0.1"#)
        .replace(r#""t_end": 0.05"#, r#""t_end": 1.0"#);
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let o = nschannel(&["run", "--config", &cfg], Some(&out));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("CFL"), "{}", stderr(&o));
    assert!(out.join("last_good.ckpt").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"viscocity": 1.0}"#);
    let o = nschannel(&["run", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("did you mean `nu`"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), r#"{"nu": -1.0}"#);
    let o = nschannel(&["run", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`nu`"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_io_error() {
    let o = nschannel(&["run", "--config", "/nonexistent/run.json"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_suite_is_usage_error() {
    let o = nschannel(&["verify", "--suite", "lemma2", "--n", "10"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lemma2"));
}

#[test]
fn verify_minkowski_passes_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "verify",
        "--suite",
        "minkowski",
        "--n",
        "30",
        "--seed",
        "3",
        "--nx",
        "16",
        "--ny",
        "16",
        "--nz",
        "17",
    ];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = nschannel(&args, Some(dir));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["verify_minkowski.json", "verify_minkowski.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn calibrate_rejects_small_ensembles() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nschannel(&["calibrate", "--suite", "gn2d", "--n", "50"], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn calibrated_constants_feed_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHEAR);
    let cal = tmp.path().join("cal");
    let o = nschannel(
        &[
            "calibrate",
            "--suite",
            "trajectory",
            "--config",
            &cfg,
            "--runs",
            "1",
            "--out-dir",
            cal.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let path = cal.join("constants_trajectory.json");
    let body = SHEAR.replace(
        r#""output""#,
        &format!(
            r#""constants": {{"mode": "calibrated", "path": "{}"}}, "output""#,
            path.display()
        ),
    );
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let o = nschannel(&["run", "--config", &cfg], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("held: yes"));
}
