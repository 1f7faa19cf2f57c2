use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rerank-flops"));
    cmd.env_remove("RERANK_FLOPS_REGISTRY");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .map(str::trim)
        .unwrap_or_else(|| panic!("no '{key}' in\n{text}"))
}

const TOY: &str = "family = \"decoder-only\"\nn_layer = 2\nd_model = 8\nd_ff = 32\nn_Q = 2\nn_KV = 2\n";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// Two judged queries plus one unjudged; candidates in reverse relevance order.
fn synthetic(dir: &Path) -> (String, String) {
    let mut run = String::new();
    for q in ["101", "102", "103"] {
        for d in 0..30 {
            run.push_str(&format!("{q} Q0 doc{d} {} {}.5 bm25\n", d + 1, 60 - d));
        }
    }
    let qrels = "101 0 doc29 3\n101 0 doc28 1\n102 0 doc10 2\n104 0 doc1 1\n";
    (write(dir, "run.txt", &run), write(dir, "qrels.txt", qrels))
}

#[test]
fn estimate_toy_model_from_path() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "toy.toml", TOY);
    let out = run(&["estimate", "--model", &model, "--n-ctx", "4", "--n-opt", "3", "--oracle-check"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(field(&text, "flops"), "23488");
    assert_eq!(field(&text, "oracle"), "agrees");
    assert!(text.contains("prompt weights    12288"));
}

#[test]
fn estimate_flan_t5_large_pointwise_call() {
    let out = run(&["estimate", "--model", "flan-t5-large", "--n-ctx", "152", "--n-opt", "0"]);
    assert!(out.status.success());
    let flops: f64 = field(&stdout(&out), "flops").parse().unwrap();
    assert!((flops - 8.9e10).abs() / 8.9e10 < 0.02);
}

#[test]
fn estimate_zero_lengths_cost_nothing() {
    let out = run(&["estimate", "--model", "qwen2.5-7b", "--n-ctx", "0", "--n-opt", "0"]);
    assert!(out.status.success());
    assert_eq!(field(&stdout(&out), "flops"), "0");
}

#[test]
fn unknown_model_lists_registry() {
    let out = run(&["estimate", "--model", "nonexistent", "--n-ctx", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("nonexistent"));
    assert!(err.contains("flan-t5-large") && err.contains("llama-3.1-8b"));
}

#[test]
fn registry_directory_from_env() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "tiny.toml", TOY);
    let out = bin()
        .env("RERANK_FLOPS_REGISTRY", dir.path())
        .args(["estimate", "--model", "tiny", "--n-ctx", "4", "--n-opt", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "flops"), "23488");
}

#[test]
fn estimate_sums_a_trace() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "toy.toml", TOY);
    let trace = write(dir.path(), "t.trace", "strategy demo 2\n4 3\n4 3\n");
    let out = run(&["estimate", "--model", &model, "--trace", &trace]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "flops"), "46976");
    assert_eq!(field(&stdout(&out), "calls"), "2");
}

#[test]
fn simulate_published_call_counts() {
    let out = run(&["simulate", "--strategy", "pairwise.allpair", "--n-docs", "100", "--model", "flan-t5-xl"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(field(&text, "calls"), "9900");
    let pf: f64 = field(&text, "petaflops").parse().unwrap();
    assert!((pf - 6.826).abs() / 6.826 < 0.15, "{pf}");

    let out = run(&["simulate", "--n-docs", "1", "--strategy", "pointwise.yes_no"]);
    assert_eq!(field(&stdout(&out), "calls"), "1");

    let out = run(&[
        "simulate", "--strategy", "listwise.generation", "--window", "4", "--step", "2", "--repeats", "5",
        "--n-docs", "100",
    ]);
    assert_eq!(field(&stdout(&out), "calls"), "245");
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let args = ["simulate", "--strategy", "pairwise.heapsort", "--seed", "42", "--format", "json"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_emits_a_trace_that_estimate_reads() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("sw.trace");
    let trace = trace.to_str().unwrap();
    let sim = run(&["simulate", "--strategy", "setwise.heapsort", "--model", "flan-t5-xl", "--emit-trace", trace]);
    assert!(sim.status.success());
    let est = run(&["estimate", "--model", "flan-t5-xl", "--trace", trace]);
    assert!(est.status.success(), "{}", stderr(&est));
    assert_eq!(field(&stdout(&sim), "flops"), field(&stdout(&est), "flops"));

    let fixed = run(&["simulate", "--strategy", "fixed", "--trace", trace, "--model", "flan-t5-xl"]);
    assert!(fixed.status.success(), "{}", stderr(&fixed));
    assert_eq!(field(&stdout(&fixed), "flops"), field(&stdout(&est), "flops"));
}

#[test]
fn evaluate_warns_on_qid_mismatch_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (run_path, qrels_path) = synthetic(dir.path());
    let args = |jobs: &str| {
        vec![
            "evaluate".to_string(),
            "--run".into(),
            run_path.clone(),
            "--qrels".into(),
            qrels_path.clone(),
            "--strategy".into(),
            "setwise.heapsort".into(),
            "--jobs".into(),
            jobs.into(),
            "--format".into(),
            "csv".into(),
        ]
    };
    let one = bin().args(args("1")).output().unwrap();
    let four = bin().args(args("4")).output().unwrap();
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    assert_eq!(one.stdout, four.stdout);
    let err = stderr(&one);
    assert!(err.contains("103") && err.contains("104"), "{err}");
    let text = stdout(&one);
    assert!(text.starts_with("dataset,model,method,ndcg"));
    assert!(text.contains("trec-dl19,flan-t5-large,setwise.heapsort,1.000,"), "{text}");
}

#[test]
fn evaluate_perfect_single_query_rpp_is_inverse_cost() {
    let dir = TempDir::new().unwrap();
    let run_path = write(dir.path(), "run", "q1 Q0 a 1 3 x\nq1 Q0 b 2 2 x\nq1 Q0 c 3 1 x\n");
    let qrels_path = write(dir.path(), "qrels", "q1 0 a 2\nq1 0 b 1\n");
    let out = run(&[
        "evaluate", "--run", &run_path, "--qrels", &qrels_path, "--strategy", "pointwise.qlm", "--format", "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let q = &v[0]["queries"][0];
    assert_eq!(q["ndcg"].as_f64(), Some(1.0));
    assert_eq!(q["cost"]["calls"].as_u64(), Some(3));
    let flops: f64 = q["cost"]["flops_exact"].to_string().trim_matches('"').parse().unwrap();

    let md = dir.path().join("r.json");
    fs::write(&md, &out.stdout).unwrap();
    let rep = run(&["report", "--input", md.to_str().unwrap(), "--format", "csv"]);
    assert!(rep.status.success(), "{}", stderr(&rep));
    let line = stdout(&rep).lines().nth(1).unwrap().to_string();
    let rpp: f64 = line.split(',').nth(8).unwrap().parse().unwrap();
    let expected = 1.0 / (flops / 1e15);
    assert!((rpp - expected).abs() / expected < 0.01, "{rpp} vs {expected}");
}

#[test]
fn report_against_snapshot() {
    let out = run(&["report", "--against", "table2", "--format", "csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let row = text
        .lines()
        .find(|l| l.starts_with("trec-dl19,flan-t5-xl,pairwise.allpair,pflops"))
        .unwrap();
    assert!(row.contains(",6.826,"), "{row}");
    let bad = run(&["report", "--against", "table9"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.toml",
        "[simulate]\nstrategy = \"pairwise.allpair\"\nn_docs = 10\nmodel = \"flan-t5-xl\"\n",
    );
    let out = run(&["--config", &cfg, "simulate"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "calls"), "90");
    let out = run(&["simulate", "--config", &cfg, "--n-docs", "5"]);
    assert_eq!(field(&stdout(&out), "calls"), "20");

    let typo = write(dir.path(), "typo.toml", "[simulate]\nn_dcos = 3\n");
    let out = run(&["--config", &typo, "simulate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("n_dcos"));
}

#[test]
fn input_errors_exit_with_one() {
    let out = run(&["evaluate", "--run", "/nonexistent/run", "--qrels", "/nonexistent/qrels", "--strategy", "pointwise.qlm"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["simulate", "--strategy", "pairwise.quicksort"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["simulate", "--strategy", "pairwise.heapsort", "--n-docs", "1"]);
    assert_eq!(out.status.code(), Some(1));
}
