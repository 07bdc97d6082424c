use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_meanfield-lab"));
    c.env_remove("MEANFIELD_LAB_THREADS");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(cmd: &mut Command) -> (i32, Output) {
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), out)
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn validate_accepts_a_builtin_and_rejects_the_broken_field() {
    let (code, _) = run(bin().args(["validate", "--config"]).arg(config("cbo_validate.json")));
    assert_eq!(code, 0);
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("broken.json");
    let (code, out) = run(bin().args(["validate", "--config"]).arg(config("broken_validate.json")).arg("--out").arg(&report));
    assert_eq!(code, 4);
    let err = stderr_json(&out);
    assert_eq!(err["exit_code"], 4);
    assert!(err["counterexample"]["margin"].as_f64().unwrap() < 0.0);
    let written: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(written["passed"], false);
}

#[test]
fn missing_config_is_a_config_error() {
    let (code, out) = run(bin().args(["simulate", "--config", "/nonexistent/cfg.json", "--out", "/tmp/x.csv"]));
    assert_eq!(code, 2);
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("/nonexistent/cfg.json"));
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(config("leader_follower.json")).unwrap().replace("\"theta\"", "\"thetta\"");
    std::fs::write(&path, text).unwrap();
    let (code, _) = run(bin().args(["simulate", "--config"]).arg(&path).args(["--out", "/tmp/x.csv"]));
    assert_eq!(code, 2);
}

#[test]
fn oracle_check_passes_and_detects_an_injected_fault() {
    let (code, out) = run(bin().args(["oracle-check", "--instances", "40"]));
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (code, _) = run(bin().args(["oracle-check", "--instances", "10", "--max-side", "1"]));
    assert_eq!(code, 0);
    let (code, out) = run(bin().args(["oracle-check", "--instances", "10", "--inject-fault"]));
    assert_eq!(code, 4);
    assert_eq!(stderr_json(&out)["exit_code"], 4);
}

#[test]
fn overflowing_drift_is_reported_as_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diverge.json");
    let text = std::fs::read_to_string(config("leader_follower.json"))
        .unwrap()
        .replace("\"confinement\": 0.5", "\"confinement\": 1e308");
    std::fs::write(&path, text).unwrap();
    let out_csv = dir.path().join("out.csv");
    let (code, out) = run(bin().args(["simulate", "--config"]).arg(&path).arg("--out").arg(&out_csv));
    assert_eq!(code, 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["exit_code"], 3);
    assert!(!out_csv.exists());
}

fn outputs(cmd: &str, cfg: &str, extra: &[&str], threads: Option<&str>) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let mut c = bin();
    c.arg(cmd).arg("--config").arg(config(cfg)).arg("--out").arg(&out).args(extra);
    if let Some(t) = threads {
        c.env("MEANFIELD_LAB_THREADS", t);
    }
    let (code, o) = run(&mut c);
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_and_meanfield_are_byte_reproducible() {
    for (cmd, cfg) in [("simulate", "leader_follower.json"), ("meanfield", "reversion_meanfield.json")] {
        let a = outputs(cmd, cfg, &[], None);
        let b = outputs(cmd, cfg, &[], Some("3"));
        assert!(!a.is_empty());
        assert_eq!(a, b, "{cmd}");
    }
    let header = &outputs("simulate", "leader_follower.json", &[], None)[0].1;
    assert!(String::from_utf8_lossy(header).lines().next().unwrap().starts_with("path_id,t,x_1,x_2,w_1,w_2"));
}

#[test]
fn seed_flag_changes_the_run() {
    let a = outputs("simulate", "leader_follower.json", &[], None);
    let b = outputs("simulate", "leader_follower.json", &["--seed", "99"], None);
    assert_ne!(a, b);
}

#[test]
fn chaos_outputs_are_reproducible_except_wall_time() {
    let strip = |files: Vec<(String, Vec<u8>)>| -> Vec<String> {
        let csv = files.iter().find(|(n, _)| n == "run.csv").unwrap();
        String::from_utf8(csv.1.clone())
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let args = ["--n-grid", "4,8", "--reps", "3"];
    let a = outputs("chaos", "reversion_chaos.json", &args, None);
    assert!(a.iter().any(|(n, _)| n == "run.summary.json"));
    let a = strip(a);
    assert_eq!(a[0], "N,rep,err");
    assert_eq!(a.len(), 1 + 2 * 3);
    assert_eq!(a, strip(outputs("chaos", "reversion_chaos.json", &args, Some("2"))));
}
