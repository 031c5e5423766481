use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn nmq(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_nmq"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

/// Data rows of a CSV with `#` comments stripped, split on commas.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, body)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, body) = rows(path);
    let i = header.iter().position(|h| h == name).unwrap();
    body.iter().map(|r| r[i].parse().unwrap()).collect()
}

const SHORT: &str = "[integrator]\nt_max = 3.0\n";

#[test]
fn coefficients_show_negative_diffusion_and_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = "[reservoir]\nr = 0.1\nkBT = 10.0\n[integrator]\nt_max = 20.0\n";
    let out = nmq(dir.path(), &["coeffs"], cfg);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let path = dir.path().join("out/coefficients.csv");
    let first = fs::read(&path).unwrap();
    let (header, body) = rows(&path);
    assert_eq!(header, ["t", "Delta", "gamma", "Gamma1", "Gamma2"]);
    assert_eq!(&body[0][..3], ["0", "0", "0"]);
    assert!(column(&path, "Delta").iter().any(|d| *d < 0.0));
    let text = String::from_utf8(first.clone()).unwrap();
    assert!(text.contains("# master_seed = 1729"));
    assert!(text.contains("# kBT = 10.0"));

    let again = nmq(dir.path(), &["coeffs"], cfg);
    assert!(again.status.success());
    assert_eq!(fs::read(&path).unwrap(), first);
}

#[test]
fn stdout_echoes_the_resolved_defaults() {
    let dir = TempDir::new().unwrap();
    let out = nmq(dir.path(), &["coeffs"], SHORT);
    let stdout = String::from_utf8(out.stdout).unwrap();
    for key in [
        "omega0 = 1.0",
        "gamma0 = 1.0",
        "theta = 1.0",
        "eta = 1.0",
        "M = 0.05",
        "alpha_sq = 0.01",
        "seed = 1729",
    ] {
        assert!(stdout.contains(key), "missing {key}");
    }
}

#[test]
fn zero_weight_control_is_zero() {
    let dir = TempDir::new().unwrap();
    let out = nmq(
        dir.path(),
        &["control"],
        "[integrator]\nt_max = 3.0\n[control]\ntheta = 0.0\n",
    );
    assert!(out.status.success());
    let path = dir.path().join("out/control.csv");
    assert!(column(&path, "ux")
        .iter()
        .chain(&column(&path, "uy"))
        .all(|u| *u == 0.0));
    let text = fs::read_to_string(&path).unwrap();
    let summary = text.lines().last().unwrap();
    assert!(
        summary.contains("iterations=1,converged=true,tol=0.000001"),
        "{summary}"
    );
}

#[test]
fn preset_control_beats_zero_control() {
    let dir = TempDir::new().unwrap();
    let out = nmq(dir.path(), &["control", "--preset", "fig2c"], "");
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("out/control.csv")).unwrap();
    let summary = text
        .lines()
        .last()
        .unwrap()
        .trim_start_matches("# summary: ");
    let field = |k: &str| -> f64 {
        summary
            .split(',')
            .find_map(|kv| kv.strip_prefix(&format!("{k}=")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(field("cost") < field("zero_control_cost"));
    assert!(field("iterations") <= 500.0);
}

#[test]
fn non_convergence_exits_3_with_output() {
    let dir = TempDir::new().unwrap();
    let out = nmq(
        dir.path(),
        &["control", "--preset", "fig2c"],
        "[control]\nmax_iter = 2\n",
    );
    assert_eq!(out.status.code(), Some(3));
    let text = fs::read_to_string(dir.path().join("out/control.csv")).unwrap();
    assert!(text.lines().last().unwrap().contains("converged=false"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = nmq(dir.path(), &["coeffs"], "initial_state = [1.0, 1.0, 1.0]\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial_state"));

    let out = nmq(dir.path(), &["coeffs"], "[integrator]\nsteps = 4\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2, column 1"));

    let out = nmq(dir.path(), &["coeffs", "--preset", "fig9"], "");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_failures_exit_4() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nmq"))
        .args(["coeffs", "--out"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let out = Command::new(env!("CARGO_BIN_EXE_nmq"))
        .args(["coeffs", "--config"])
        .arg(dir.path().join("missing.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn simulate_and_ensemble_outputs() {
    let dir = TempDir::new().unwrap();
    let out = nmq(dir.path(), &["simulate", "--seed", "42"], SHORT);
    assert!(out.status.success());
    let traj = dir.path().join("out/trajectory.csv");
    let (header, body) = rows(&traj);
    assert_eq!(
        header,
        ["t", "x", "y", "z", "ux", "uy", "dW", "Y", "Lambda"]
    );
    assert_eq!(body.len(), 301);
    assert!(fs::read_to_string(&traj)
        .unwrap()
        .contains("# master_seed = 42"));

    let out = nmq(
        dir.path(),
        &["ensemble", "--trajectories", "40", "--mode", "markovian"],
        SHORT,
    );
    assert!(out.status.success());
    let csv = dir.path().join("out/ensemble.csv");
    let (header, _) = rows(&csv);
    assert_eq!(
        header,
        [
            "t",
            "mean_Lambda",
            "var_Lambda",
            "mean_x",
            "mean_y",
            "mean_z"
        ]
    );
    assert_eq!(column(&csv, "mean_Lambda")[0], 1.0);
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/ensemble.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["trajectories"], 40);
    assert_eq!(sidecar["master_seed"], 1729);
    assert_eq!(sidecar["config"]["mode"], "markovian");
    assert!(sidecar["clamp_rate"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fig1_writes_one_file_per_mode_and_temperature() {
    let dir = TempDir::new().unwrap();
    let out = nmq(dir.path(), &["fig1", "--preset", "fig1"], "");
    assert!(out.status.success());
    for kbt in ["0", "1", "2", "5", "10"] {
        let mk = dir.path().join(format!("out/fig1_markovian_kBT{kbt}.csv"));
        let lambda = column(&mk, "Lambda");
        assert!(lambda.windows(2).all(|w| w[1] <= w[0]), "kBT={kbt}");
        assert!(fs::read_to_string(&mk)
            .unwrap()
            .contains("# master_seed = "));
        assert!(dir
            .path()
            .join(format!("out/fig1_nonmarkovian_kBT{kbt}.csv"))
            .exists());
    }
}

#[test]
fn fig2_panel_files_carry_a_warning_column() {
    let dir = TempDir::new().unwrap();
    let out = nmq(
        dir.path(),
        &["fig2", "--preset", "fig2a", "--trajectories", "20"],
        "",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for part in ["controlled", "uncontrolled", "markovian", "target"] {
        let path = dir.path().join(format!("out/fig2a_{part}.csv"));
        assert!(column(&path, "warn").iter().all(|w| *w == 0.0), "{part}");
    }
    assert!(column(&dir.path().join("out/fig2a_target.csv"), "Lambda")
        .iter()
        .all(|l| *l == 1.0));

    let out = nmq(
        dir.path(),
        &["fig2", "--preset", "fig2a", "--trajectories", "5"],
        "[control]\nmax_iter = 1\n",
    );
    assert_eq!(out.status.code(), Some(3));
    let path = dir.path().join("out/fig2a_controlled.csv");
    assert!(column(&path, "warn").iter().all(|w| *w == 1.0));
}
