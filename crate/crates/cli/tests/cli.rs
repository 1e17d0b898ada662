use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_densewire"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(&["search", "--seed", "minus-one"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["stats"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let out = run(&["stats", "--store", "/nonexistent/store.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(
        run(&["search", "--seed", "1", "--strategy", "hill"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["search", "--seed", "1", "--oracle", "oracle-of-delphi"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn sample_train_predict() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.jsonl");
    let model = dir.path().join("m.json");
    let more = dir.path().join("aug.jsonl");
    assert!(ok(&[
        "sample",
        "--preset",
        "cifar10",
        "--n",
        "40",
        "--seed",
        "1",
        "--out",
        p(&store)
    ])
    .contains("40 records"));
    ok(&[
        "sample",
        "--preset",
        "cifar10",
        "--n",
        "10",
        "--seed",
        "2",
        "--out",
        p(&store),
        "--append",
    ]);
    let summary = ok(&["stats", "--store", p(&store)]);
    assert!(summary.starts_with("records=50 measured=50"), "{summary}");

    ok(&[
        "augment",
        "--in",
        p(&store),
        "--out",
        p(&more),
        "--factor",
        "3",
        "--seed",
        "0",
    ]);
    assert!(ok(&["stats", "--store", p(&more)]).contains("augmented="));

    let trained = ok(&[
        "train-predictor",
        "--data",
        p(&more),
        "--out",
        p(&model),
        "--seed",
        "0",
        "--epochs",
        "4",
        "--hidden",
        "32,16",
    ]);
    assert!(trained.contains("kendall_tau="), "{trained}");
    let table = ok(&["predict", "--model", p(&model), "--records", p(&store)]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "canon,perf,prediction");
    assert_eq!(rows.len(), 51);
    for row in &rows[1..] {
        let y: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&y));
    }

    let best = dir.path().join("best.json");
    let trace = ok(&[
        "search",
        "--preset",
        "cifar10",
        "--oracle",
        &format!("predictor:{}", p(&model)),
        "--rounds",
        "5",
        "--pop",
        "4",
        "--init-pop",
        "4",
        "--seed",
        "3",
        "--best-out",
        p(&best),
    ]);
    assert_eq!(trace.lines().count(), 6);
    let single = ok(&["predict", "--model", p(&model), "--in", p(&best)]);
    assert!(single.trim().parse::<f64>().is_ok());
    assert!(ok(&["export-dot", "--in", p(&best)]).starts_with("digraph"));
    assert!(ok(&["stats", "--in", p(&best), "--budget", "50000000"]).contains("multiplier="));
}

#[test]
fn too_few_held_out_classes_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.jsonl");
    ok(&["sample", "--n", "3", "--seed", "1", "--out", p(&store)]);
    let out = run(&[
        "train-predictor",
        "--data",
        p(&store),
        "--out",
        p(&dir.path().join("m")),
        "--seed",
        "0",
        "--epochs",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn search_with_external_evaluator() {
    let script = r#"external:while read line; do id=$(echo "$line" | sed 's/^{"id":\([0-9]*\),.*/\1/'); echo "{\"id\":$id,\"score\":0.25}"; done"#;
    let trace = ok(&[
        "search",
        "--oracle",
        script,
        "--eval-epochs",
        "1",
        "--data-fraction",
        "0.02",
        "--rounds",
        "3",
        "--pop",
        "2",
        "--init-pop",
        "2",
        "--seed",
        "0",
    ]);
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(
        lines[0],
        "round,temperature,best_child_score,accepted,parent_score,best_ever_score"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.ends_with(",0.25")));
}

#[test]
fn failing_external_evaluator_is_a_runtime_error() {
    let out = run(&[
        "search",
        "--oracle",
        "external:exit 0",
        "--rounds",
        "1",
        "--seed",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn enumerate_and_verify_small_space() {
    assert!(ok(&["enumerate", "--num-vertices", "3"]).starts_with("valid=4 "));
    let csv = ok(&[
        "verify-mcmc",
        "--num-vertices",
        "4",
        "--oracle",
        "synthetic-b",
        "--steps",
        "20000",
        "--burn-in",
        "100",
        "--seed",
        "1",
    ]);
    assert!(csv.starts_with("state_hex,perf,pi_analytic,freq_empirical"));
    assert!(csv.lines().last().unwrap().starts_with("# tv="));
}
