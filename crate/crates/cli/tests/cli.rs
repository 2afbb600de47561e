use std::fs;
use std::process::{Command, Output};

fn tamperid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tamperid"))
        .args(args)
        .env("TAMPERID_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, "# short run\nexperiment.horizon=500\nexperiment.replicas=3\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = tamperid(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--emit-gnuplot",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("small.csv")).unwrap();
    assert!(csv.starts_with("k,mean_sq_error,"));
    assert_eq!(csv.lines().count(), 501);
    let manifest = fs::read_to_string(out_dir.join("small.manifest")).unwrap();
    assert!(manifest.contains("config.experiment.replicas=3"));
    assert!(out_dir.join("small.gp").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.cfg");
    fs::write(&cfg, "experiment.algorithm=grp-up\nexperiment.horizon=800\nexperiment.replicas=2\n").unwrap();
    let mut texts = Vec::new();
    for sub in ["x", "y"] {
        let out_dir = dir.path().join(sub);
        let out = tamperid(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        texts.push(fs::read(out_dir.join("a.csv")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn seed_and_replica_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.cfg");
    fs::write(&cfg, "experiment.horizon=200\n").unwrap();
    let out = tamperid(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--replicas",
        "2",
        "--seed",
        "7",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = fs::read_to_string(dir.path().join("b.manifest")).unwrap();
    assert!(manifest.contains("config.seeds.base=7"));
    assert!(manifest.contains("config.experiment.replicas=2"));
}

#[test]
fn unidentifiable_attack_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "channel.p=0.4\nchannel.q=0.6\n").unwrap();
    let out = tamperid(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error key=channel.p+channel.q:"), "{err}");
}

#[test]
fn unknown_override_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "").unwrap();
    let out = tamperid(&["validate", "--config", cfg.to_str().unwrap(), "--set", "grad.alpha=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error key=grad.alpha:"));
}

#[test]
fn validate_prints_resolved_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("d.cfg");
    fs::write(&cfg, "grad.gamma=0.8\n").unwrap();
    let out = tamperid(&["validate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "grad.gamma=0.8"));
    assert!(text.lines().any(|l| l == "channel.p=0.2"));
}

#[test]
fn example_presets_accept_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = tamperid(&[
        "example2",
        "--out",
        dir.path().to_str().unwrap(),
        "--replicas",
        "2",
        "--set",
        "experiment.horizon=300",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("example2_nrp-up_p0.1_q0.2.csv").exists());
}

#[test]
fn missing_config_file_is_reported() {
    let out = tamperid(&["run", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error file=/nonexistent/x.cfg:"));
}
