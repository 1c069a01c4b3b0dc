use zyglab::experiments::{run_named, EXPERIMENTS};
use zyglab::par;

const PASS_SMALL: &[&str] =
    &["bmo-norm", "plancherel", "equivalence", "jn-tail", "exp-log", "lower-bound", "ap-char", "upper-sweep", "oracles"];

#[test]
fn small_presets_run_and_report() {
    for e in EXPERIMENTS {
        let rep = run_named(e.name, None, true, 1).unwrap_or_else(|err| panic!("{}: {err}", e.name));
        assert_eq!(rep.name, e.name);
        assert!(!rep.checks.is_empty(), "{} records no checks", e.name);
        if PASS_SMALL.contains(&e.name) {
            assert!(rep.passed(), "{}: {:?}", e.name, rep.failed_checks());
        }
    }
}

#[test]
fn small_calderon_contracts() {
    let rep = run_named("calderon", Some(&serde_json::json!({"policy_check": false})), true, 0).unwrap();
    for c in &rep.checks {
        assert!(c.passed, "{} observed {} required {}", c.name, c.observed, c.requirement);
    }
    assert_eq!(rep.metric_f64("n0"), Some(3.0));
}

#[test]
fn sequential_and_parallel_reports_agree_bitwise() {
    for name in ["plancherel", "equivalence", "upper-sweep"] {
        let a = run_named(name, None, true, 4).unwrap().to_json();
        par::set_sequential(true);
        let b = run_named(name, None, true, 4).unwrap().to_json();
        par::set_sequential(false);
        assert_eq!(a, b, "{name}");
        assert_eq!(a, run_named(name, None, true, 4).unwrap().to_json());
    }
}
