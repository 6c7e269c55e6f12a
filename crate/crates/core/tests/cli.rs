use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_pendyn");

const SHORT_RUN: &str = r#"
[problem]
name = "strongly-monotone-projection"

[integrator]
mode = "adaptive"
dt = 0.01
t_end = 50.0
sample_interval = 0.5
"#;

fn pendyn(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_accepts_default_schedules() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "ok.toml", SHORT_RUN);
    let o = pendyn(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("result: pass"));
}

#[test]
fn validate_rejects_low_damping_with_reason() {
    let tmp = TempDir::new().unwrap();
    let body = format!(
        "{SHORT_RUN}\n[schedules]\nlambda = {{ c0 = 1.0, p = -0.75 }}\nbeta = {{ c0 = 1.0, p = 0.5 }}\ngamma = {{ kind = \"constant\", g0 = 1.0 }}\n"
    );
    let cfg = write_config(tmp.path(), "bad.toml", &body);
    let o = pendyn(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("gamma_floor"));
}

#[test]
fn malformed_config_is_a_validation_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "typo.toml",
        &format!("{SHORT_RUN}\nbogus = 1\n"),
    );
    let o = pendyn(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let missing = pendyn(&[
        "validate",
        "--config",
        tmp.path().join("absent.toml").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_runtime_code() {
    assert_eq!(pendyn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pendyn(&["run"]).status.code(), Some(2));
    assert_eq!(pendyn(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_writes_artifacts_with_crlf_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", SHORT_RUN);
    let out = tmp.path().join("out");
    let o = pendyn(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for f in [
        "trajectory.csv",
        "monitors.csv",
        "ergodic.csv",
        "diagnostics.json",
        "hypotheses.json",
        "plotdata/distance.tsv",
        "plotdata/energy.tsv",
        "plotdata/residual.tsv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let first = traj.split("\r\n").next().unwrap();
    assert!(first.starts_with("t,x_0,x_1,v_0,v_1"), "{first}");
    let row: Vec<&str> = traj.split("\r\n").nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "0.0000000000000000e0");
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["problem"]["name"], "strongly-monotone-projection");
    assert!(diag["monitors"].as_array().unwrap().len() == 4);
}

#[test]
fn unsupported_regime_needs_force() {
    let tmp = TempDir::new().unwrap();
    let body = format!(
        "{SHORT_RUN}\n[schedules]\nlambda = {{ c0 = 1.0, p = -0.3 }}\nbeta = {{ c0 = 1.0, p = 0.5 }}\ngamma = {{ kind = \"constant\", g0 = 1.5 }}\n"
    );
    let cfg = write_config(tmp.path(), "weak.toml", &body);
    let out = tmp.path().join("out");
    let args = [
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(pendyn(&args).status.code(), Some(1));
    assert!(!out.join("trajectory.csv").exists());

    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(pendyn(&forced).status.code(), Some(0));
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["integration"]["unsupported_regime"], true);
    assert_eq!(diag["convergence"]["verdict"], "suppressed");
}

#[test]
fn divergent_run_reports_runtime_error() {
    let tmp = TempDir::new().unwrap();
    let body = r#"
[problem]
name = "strongly-monotone-projection"
u0 = [1e300, -1e300]

[integrator]
mode = "fixed"
dt = 10.0
t_end = 1000.0
"#;
    let cfg = write_config(tmp.path(), "boom.toml", body);
    let out = tmp.path().join("out");
    let o = pendyn(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    let err: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert!(err["last_good_state"]["t"].is_number());
    assert!(out.join("hypotheses.json").is_file());
}

#[test]
fn runs_are_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", SHORT_RUN);
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = pendyn(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        files.push(
            ["trajectory.csv", "monitors.csv", "ergodic.csv"]
                .map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn sweep_writes_one_row_per_value_in_order() {
    let tmp = TempDir::new().unwrap();
    let body =
        format!("{SHORT_RUN}\n[sweep]\nparameter = \"lambda.p\"\nvalues = [-0.9, -0.75, -0.3]\n");
    let cfg = write_config(tmp.path(), "sweep.toml", &body);
    let summary = |dir: &str, jobs: &str| {
        let out = tmp.path().join(dir);
        let o = pendyn(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        fs::read_to_string(out.join("summary.csv")).unwrap()
    };
    let serial = summary("serial", "1");
    let parallel = summary("parallel", "3");
    assert_eq!(serial, parallel);
    let rows: Vec<&str> = serial.split("\r\n").filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("0,lambda.p,") && rows[1].contains(",ok,"));
    assert!(rows[3].starts_with("2,lambda.p,") && rows[3].contains(",hypothesis-failed,"));
}

#[test]
fn sweep_without_table_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", SHORT_RUN);
    let o = pendyn(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gallery_lists_every_instance() {
    let o = pendyn(&["gallery"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in pendyn_core::problems::GALLERY_NAMES {
        assert!(text.contains(name), "{name}");
    }
    assert!(text.contains("-n20"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let o = pendyn(&["validate", "--config", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}: {}", p.display(), stdout(&o));
        n += 1;
    }
    assert!(n >= 4);
}
