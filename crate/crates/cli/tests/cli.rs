use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn frog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frog")).args(args).output().expect("binary runs")
}

fn outputs(dir: &Path, stem: &str) -> (String, String) {
    let p = |ext: &str| dir.join(format!("{stem}.{ext}")).to_str().unwrap().to_string();
    (p("json"), p("csv"))
}

fn read_json(path: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn mu_report_plumbing() {
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = outputs(dir.path(), "mu");
    let out = frog(&[
        "mu", "--law", "poisson:1.0", "--dim", "2", "--k", "4,8,16", "--replicas", "200", "--seed", "7", "--json", &json,
        "--csv", &csv,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("mu: mu_hat"));

    let report = read_json(&json);
    assert_eq!(report["software"]["name"], "frog-cli");
    assert_eq!(report["plan"]["seed"]["master_seed"], 7);
    assert_eq!(report["seeds"]["replicas"]["count"], 200);
    assert_eq!(report["plan"]["law"]["variant"], "poisson");
    let per_k = report["result"]["per_k"].as_array().unwrap();
    assert_eq!(per_k.iter().map(|p| p["k"].as_u64().unwrap()).collect::<Vec<_>>(), vec![4, 8, 16]);
    let mu = report["result"]["mu_hat"].as_f64().unwrap();
    assert!((1.0..4.0).contains(&mu), "{mu}");
    assert_eq!(report["result"]["bound_violations"], 0);

    let table = std::fs::read_to_string(&csv).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("k,horizon,n,censored,mean,std,ci_lo,ci_hi"));
    assert_eq!(lines.count(), 3);
    assert_eq!(listing(dir.path()), vec!["mu.csv", "mu.json"]);
}

#[test]
fn tails_rejects_nonpositive_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = outputs(dir.path(), "tails");
    for eps in ["0", "-0.5"] {
        let out = frog(&["tails", "--side", "upper", "--epsilon", eps, "--seed", "1", "--json", &json, "--csv", &csv]);
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("`epsilon`"));
    }
    assert!(listing(dir.path()).is_empty());
}

#[test]
fn plan_errors_name_the_parameter() {
    let cases: &[(&[&str], &str)] = &[
        (&["mu", "--k", "4,8"], "`seed`"),
        (&["mu", "--seed", "1", "--law", "poisson:-1"], "`lambda`"),
        (&["mu", "--seed", "1", "--dim", "9"], "`dim`"),
        (&["mu", "--seed", "1", "--k", "8,4"], "`k`"),
        (&["passage", "--seed", "1", "--target", "1,2,3"], "`target`"),
    ];
    for (args, needle) in cases {
        let out = frog(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
    let out = frog(&["mu", "--seed", "1", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn censoring_budget_breach_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = outputs(dir.path(), "mu");
    let out = frog(&["mu", "--seed", "3", "--k", "4,8", "--horizon", "5", "--json", &json, "--csv", &csv]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("censoring rate"));
    assert!(listing(dir.path()).is_empty());
}

#[test]
fn replay_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = outputs(dir.path(), "trunc");
    let out = frog(&[
        "truncation", "--seed", "11", "--target", "4,0", "--t", "1,4,16", "--replicas", "24", "--calibration", "40", "--k",
        "4,8", "--threads", "1", "--json", &json, "--csv", &csv,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (j0, c0) = (std::fs::read(&json).unwrap(), std::fs::read(&csv).unwrap());
    assert_eq!(
        String::from_utf8_lossy(&c0).lines().next(),
        Some("t,replicas,disagreements,phat,ci_lo,ci_hi")
    );

    for threads in ["4", "2"] {
        let out = frog(&["replay", &json, "--threads", threads]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(std::fs::read(&json).unwrap(), j0);
        assert_eq!(std::fs::read(&csv).unwrap(), c0);
    }

    // a bare plan file replays to the same bytes too
    let plan_path = dir.path().join("plan.json");
    let report = read_json(&json);
    std::fs::write(&plan_path, serde_json::to_string(&report["plan"]).unwrap()).unwrap();
    let out = frog(&["replay", plan_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(&json).unwrap(), j0);
    assert_eq!(listing(dir.path()), vec!["plan.json", "trunc.csv", "trunc.json"]);
}

#[test]
fn flags_override_plan_file() {
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = outputs(dir.path(), "audit");
    let plan_path = dir.path().join("plan.json");
    let plan = serde_json::json!({
        "version": 1,
        "command": "audit",
        "law": {"variant": "bernoulli", "p": 0.8},
        "dim": 2,
        "seed": {"master_seed": 5, "experiment_tag": "from-file", "replicas": {"start": 0, "count": 40}},
        "params": {"spread": 4, "direct_path_trials": 1000},
        "outputs": {"json": json, "csv": csv}
    });
    std::fs::write(&plan_path, plan.to_string()).unwrap();
    let out = frog(&["audit", "--plan", plan_path.to_str().unwrap(), "--replicas", "30"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&json);
    assert_eq!(report["plan"]["seed"]["replicas"]["count"], 30);
    assert_eq!(report["plan"]["seed"]["experiment_tag"], "from-file");
    assert_eq!(report["plan"]["params"]["spread"], 4);
    assert_eq!(report["result"]["subadditivity"]["violations"], 0);
    assert_eq!(report["result"]["lower_tail_rate_lb"].as_f64().unwrap(), -1.38629436112);

    let wrong = frog(&["mu", "--plan", plan_path.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("`command`"));
}
