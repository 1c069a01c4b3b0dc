use std::path::Path;
use std::process::{Command, Output};

fn zyglab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zyglab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn list_names_every_experiment() {
    let out = zyglab(&["list-experiments"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 11);
    for name in ["lower-bound", "calderon", "bmo-norm", "upper-sweep", "plancherel"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
    let calderon = text.lines().find(|l| l.starts_with("calderon")).unwrap();
    assert!(calderon.contains("Calderon reproducing formula"));
    let lower = text.lines().find(|l| l.starts_with("lower-bound")).unwrap();
    assert!(lower.contains("lower bound"));
}

#[test]
fn bmo_norm_at_a_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "seed = 1\n[params]\na_values = [4.0]\n");
    let out_dir = dir.path().join("out");
    let out = zyglab(&["bmo-norm", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let mean = json["metrics"]["mean/4"].as_f64().unwrap();
    let osc = json["metrics"]["oscillation/4"].as_f64().unwrap();
    assert!((mean - 6.0).abs() <= 0.01 * 6.0);
    assert!((osc - 1.0).abs() <= 0.02);
    assert!(out_dir.join("curves/oscillation.csv").exists());
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.trim_end().ends_with("bmo-norm PASS"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "seed = 7\n[params]\nsamples = 3\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = zyglab(&["plancherel", "--small", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    let ra = std::fs::read(a.join("report.json")).unwrap();
    let rb = std::fs::read(b.join("report.json")).unwrap();
    assert_eq!(ra, rb);
    let c = dir.path().join("c");
    zyglab(&["plancherel", "--small", "--config", &cfg, "--seed", "8", "--out", c.to_str().unwrap()]);
    assert_ne!(ra, std::fs::read(c.join("report.json")).unwrap());
}

#[test]
fn zero_input_plancherel_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[params]\nzero_input = true\nsamples = 2\n");
    let out = zyglab(&["plancherel", "--small", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = out_dir.to_str().unwrap();

    let unknown = zyglab(&["no-such-experiment", "--out", out]);
    assert_eq!(unknown.status.code(), Some(2));

    let bad_key = write_config(dir.path(), "bad.toml", "[params]\nno_such_key = 1\n");
    assert_eq!(zyglab(&["bmo-norm", "--config", &bad_key, "--out", out]).status.code(), Some(2));

    // roundoff alone exceeds a tolerance of zero
    let failing = write_config(dir.path(), "fail.toml", "[params]\ntol = 0.0\nsamples = 2\n");
    let res = zyglab(&["plancherel", "--small", "--config", &failing, "--out", out]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8(res.stderr).unwrap();
    assert!(err.contains("failed plancherel"), "{err}");
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("FAIL plancherel"));

    let ok = zyglab(&["oracles", "--small", "--out", out]);
    assert_eq!(ok.status.code(), Some(0));
}
