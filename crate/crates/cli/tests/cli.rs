use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn lakejoin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lakejoin"))
        .args(args)
        .env_remove("LAKEJOIN_LAKE")
        .output()
        .expect("spawn lakejoin")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = lakejoin(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn query_exact_prints_ranked_csv() {
    let lake = fixtures().join("lake");
    let base = fixtures().join("company_revenue.csv");
    let out = ok(&[
        "query", "--lake", s(&lake), "--table", s(&base), "--column", "company",
        "--method", "exact", "--top-k", "30",
    ]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("rank,table,column,containment"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty() && rows.len() <= 30);
    let mut prev = f64::INFINITY;
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 4);
        assert_eq!(r[0].parse::<usize>().unwrap(), i + 1);
        let c: f64 = r[3].parse().unwrap();
        assert!(c > 0.0 && c <= 1.0 && c <= prev);
        prev = c;
    }
}

#[test]
fn query_jsonl_with_env_lake() {
    let base = fixtures().join("company_revenue.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_lakejoin"))
        .args(["query", "--table", s(&base), "--column", "company", "--top-k", "3", "--format", "jsonl"])
        .env("LAKEJOIN_LAKE", fixtures().join("lake"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        assert!(l.starts_with('{') && l.contains("\"containment\":"));
    }
}

#[test]
fn missing_lake_is_usage_error() {
    let base = fixtures().join("company_revenue.csv");
    let o = lakejoin(&["query", "--table", s(&base), "--column", "company", "--method", "exact"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--lake"));
    assert!(stderr(&o).contains("--help"));
}

#[test]
fn bad_flags_exit_one_help_exits_zero() {
    assert_eq!(lakejoin(&[]).status.code(), Some(1));
    assert_eq!(lakejoin(&["query", "--bogus"]).status.code(), Some(1));
    assert_eq!(lakejoin(&["query", "--method", "nope"]).status.code(), Some(1));
    let h = lakejoin(&["--help"]);
    assert_eq!(h.status.code(), Some(0));
    assert!(stdout(&h).contains("Usage"));
}

#[test]
fn data_errors_exit_two() {
    let lake = fixtures().join("lake");
    let o = lakejoin(&["query", "--lake", s(&lake), "--table", "/no/such.csv", "--column", "c"]);
    assert_eq!(o.status.code(), Some(2));
    let base = fixtures().join("company_revenue.csv");
    let o = lakejoin(&["query", "--lake", s(&lake), "--table", s(&base), "--column", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn index_then_minhash_query_without_lake() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("lake.idx");
    let lake = fixtures().join("lake");
    ok(&["index", "--lake", s(&lake), "--method", "minhash", "--threshold", "0.2", "--out", s(&idx)]);
    assert!(idx.metadata().unwrap().len() > 0);
    let base = fixtures().join("company_revenue.csv");
    let out = ok(&[
        "query", "--index", s(&idx), "--table", s(&base), "--column", "company",
        "--method", "minhash", "--top-k", "5",
    ]);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(!rows.is_empty() && rows.len() <= 5);
    for r in rows {
        assert!(r.ends_with(','), "minhash rows carry no containment: {r}");
    }
    let hybrid = ok(&[
        "query", "--lake", s(&lake), "--index", s(&idx), "--table", s(&base),
        "--column", "company", "--method", "hybrid", "--top-k", "5",
    ]);
    assert!(hybrid.lines().skip(1).all(|r| !r.ends_with(',')));
}

#[test]
fn augment_plan_replay_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let lake = fixtures().join("lake");
    let base = fixtures().join("company_revenue.csv");
    ok(&[
        "augment", "--lake", s(&lake), "--table", s(&base), "--column", "company",
        "--target", "revenue", "--selector", "best_single", "--top-k", "10",
        "--out", s(&d.join("aug.csv")), "--plan-out", s(&d.join("plan.txt")),
        "--model-out", s(&d.join("model.bin")),
    ]);
    let aug = fs::read_to_string(d.join("aug.csv")).unwrap();
    let header = aug.lines().next().unwrap();
    assert!(header.starts_with("company,revenue,listed,region,"));

    let replayed = ok(&["augment", "--lake", s(&lake), "--table", s(&base), "--plan", s(&d.join("plan.txt"))]);
    assert_eq!(replayed, aug);

    let pred = ok(&["predict", "--model", s(&d.join("model.bin")), "--table", s(&d.join("aug.csv"))]);
    let lines: Vec<&str> = pred.lines().collect();
    assert_eq!(lines[0], "prediction");
    assert_eq!(lines.len(), aug.lines().count());
    assert!(lines[1..].iter().all(|l| l.parse::<f64>().unwrap().is_finite()));
}

#[test]
fn synth_variants() {
    let dir = tempfile::tempdir().unwrap();
    let trip = fixtures().join("triplets.tsv");
    let bin = dir.path().join("bin");
    ok(&["synth", "--triplets", s(&trip), "--variant", "binary", "--out", s(&bin)]);
    let csvs = fs::read_dir(&bin)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 70);
    assert!(bin.join("manifest.tsv").exists());

    let sampled = dir.path().join("sampled");
    ok(&[
        "synth", "--triplets", s(&trip), "--variant", "sampled", "--n", "10", "--arity", "8",
        "--p", "0.7", "--ns", "2", "--seed", "3", "--out", s(&sampled),
    ]);
    assert!(sampled.join("manifest.tsv").exists());

    let o = lakejoin(&["synth", "--triplets", s(&trip), "--variant", "sampled", "--p", "1.5", "--out", s(&sampled)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let conf = fixtures().join("demo.conf");
    ok(&["--threads", "1", "evaluate", "--config", s(&conf), "--out", s(&runs)]);
    let records = fs::read_to_string(runs.join("records.csv")).unwrap();
    let mut lines = records.lines();
    assert!(lines.next().unwrap().starts_with("config_id,retrieval,selector,aggregation,predictor,top_k,seed,fold,metric,value,status"));
    assert_eq!(lines.count(), 16 * 5);

    let rep = dir.path().join("report");
    let out = ok(&["report", "--runs", s(&runs), "--pareto", "--ablation", "--reference", "default", "--out", s(&rep)]);
    assert!(out.contains("config_id,n_records"));
    assert!(out.contains("dimension,value,n_pairs"));
    let pareto = fs::read_to_string(rep.join("pareto.csv")).unwrap();
    assert_eq!(pareto.lines().count(), 17);
    let ablation = fs::read_to_string(rep.join("ablation.csv")).unwrap();
    assert!(ablation.contains("selector,highest_containment,5,"));

    let o = lakejoin(&["report", "--runs", s(&runs), "--reference", "nobody"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "lake = lake\nselector = nope\n").unwrap();
    let o = lakejoin(&["evaluate", "--config", s(&conf), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn evaluate_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let conf = fixtures().join("demo.conf");
    ok(&["evaluate", "--config", s(&conf), "--out", s(dir.path()), "--seed", "7"]);
    let records = fs::read_to_string(dir.path().join("records.csv")).unwrap();
    let rows: Vec<Vec<&str>> = records.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 16 * 5);
    assert!(rows.iter().all(|r| r[6] == "7"));
}
