use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lakejoin::catalog::LakeCatalog;
use lakejoin::evaluate::{
    ablation_report, run_experiment, topk_sweep, Dimension, ExperimentConfig, ReferenceConfig, Workspace,
    STATUS_BASELINE,
};
use lakejoin::fixtures::{self, KEY, TARGET};
use lakejoin::merge::{inner_split, run_selector, AggregationPolicy, SelectorInput, SelectorKind};
use lakejoin::predict::{self, PredictorConfig, Task};
use lakejoin::retrieval::{
    exact_match, hybrid_query, minhash_pool, minhash_query, LshEnsembleIndex, LshParams, QuerySpec, RetrievalMethod,
    Score,
};
use lakejoin::table::{Column, Table};

fn keyed(name: &str, col: &str, keys: impl IntoIterator<Item = usize>) -> Table {
    Table::new(name, vec![Column::categorical(col, keys.into_iter().map(|k| Some(format!("v{k}"))))]).unwrap()
}

fn regression(selector: SelectorKind, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        selector,
        seed,
        task: Some(Task::Regression),
        ..ExperimentConfig::new(KEY, TARGET)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn depleted_baseline_is_near_zero() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let base = fixtures::independent_base(400, 6, seed);
        assert_eq!(base.n_cols(), 8);
        let ws = Workspace::new(LakeCatalog::from_tables(Vec::new()).unwrap(), base);
        let recs = run_experiment(&ws, &regression(SelectorKind::BestSingle, seed)).unwrap();
        assert_eq!(recs.len(), 5);
        assert!(recs.iter().all(|r| r.status == STATUS_BASELINE));
        let m = mean(&recs.iter().map(|r| r.value).collect::<Vec<_>>());
        worst = worst.max(m.abs());
    }
    assert!(worst <= 0.1, "worst mean fold R2 magnitude {worst}");
}

#[test]
fn perfect_candidate_end_to_end() {
    let lake = fixtures::perfect_lake(3);
    let ws = lake.workspace().unwrap();
    let r = ReferenceConfig::DEFAULT;
    let cfg = ExperimentConfig {
        retrieval: r.retrieval,
        selector: r.selector,
        aggregation: r.aggregation,
        predictor: r.predictor.to_string(),
        ..regression(r.selector, 3)
    };
    let recs = run_experiment(&ws, &cfg).unwrap();
    assert_eq!(recs.len(), 5);
    assert!(recs.iter().all(|r| r.is_ok() && r.n_selected == 1));
    let m = mean(&recs.iter().map(|r| r.value).collect::<Vec<_>>());
    assert!(m >= 0.95, "mean fold R2 {m}");
}

#[test]
fn highest_containment_is_cheaper_than_best_single() {
    let mut records = Vec::new();
    for seed in 0..3 {
        let ws = fixtures::noise_lake_sized(1500, seed).workspace().unwrap();
        for s in [SelectorKind::BestSingle, SelectorKind::HighestContainment] {
            records.extend(run_experiment(&ws, &regression(s, seed)).unwrap());
        }
    }
    let rows = ablation_report(&records, &ReferenceConfig::DEFAULT).unwrap();
    let hc = rows
        .iter()
        .find(|r| r.dimension == Dimension::Selector && r.value == "highest_containment")
        .unwrap();
    assert_eq!(hc.n_pairs, 15);
    assert!(hc.median_time_ratio < 1.0, "time ratio {}", hc.median_time_ratio);
    let same = rows.iter().find(|r| r.value == "best_single").unwrap();
    assert_eq!((same.median_diff_pct, same.median_time_ratio), (0.0, 1.0));
}

#[test]
fn topk_sweep_width_and_memory() {
    let ws = fixtures::noise_lake_sized(1500, 9).workspace().unwrap();
    let cfg = regression(SelectorKind::FullJoin, 9);
    let sweep = topk_sweep(&ws, &cfg, &[1, 4, 12, 30]).unwrap();
    for r in &sweep[0].1 {
        assert_eq!(r.n_selected, 1);
    }
    let peaks: Vec<usize> = sweep
        .iter()
        .map(|(_, recs)| recs.iter().map(|r| r.peak_bytes).max().unwrap())
        .collect();
    assert!(peaks.windows(2).all(|w| w[0] <= w[1]), "{peaks:?}");
    assert!(topk_sweep(&ws, &regression(SelectorKind::BestSingle, 9), &[1]).is_err());
}

#[test]
fn best_single_on_pure_noise_stays_near_baseline() {
    let predictor = PredictorConfig::gbdt(Task::Regression);
    let mut deltas = Vec::new();
    for seed in 0..20 {
        let lake = fixtures::noise_lake_sized(1000, seed);
        let noise: Vec<Table> = lake.tables.into_iter().filter(|t| t.name().starts_with("wide")).collect();
        let cat = LakeCatalog::from_tables(noise).unwrap();
        let q = QuerySpec::new(&lake.base, KEY, RetrievalMethod::Exact).unwrap();
        let cands = exact_match(&q, &cat).unwrap();
        assert_eq!(cands.len(), 5);
        let input = SelectorInput {
            train: &lake.base,
            query_column: KEY,
            target: TARGET,
            candidates: &cands,
            catalog: &cat,
            aggregation: AggregationPolicy::Any,
            predictor: &predictor,
            seed,
            max_iter: 30,
            meter: None,
        };
        let out = run_selector(SelectorKind::BestSingle, &input).unwrap();
        let chosen = out.validation_scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);

        let (tr, va) = inner_split(lake.base.n_rows(), seed);
        let y_only = lake.base.drop_columns(&[KEY]);
        let m = predict::fit(&y_only.take(&tr), TARGET, &predictor, seed).unwrap();
        let baseline = predict::score(&m, &y_only.take(&va), TARGET, Task::Regression.metric()).unwrap();
        deltas.push(chosen - baseline);
    }
    let avg = mean(&deltas);
    assert!(avg.abs() <= 0.05, "mean delta {avg}, deltas {deltas:?}");
}

fn trial_lake(seed: u64) -> (Table, LakeCatalog) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q: Vec<usize> = sample(&mut rng, 1000, 300).into_vec();
    let base = keyed("base", "q", q.iter().copied());
    let dup = keyed("dup", "q_copy", q.iter().copied());
    let disjoint = keyed("disjoint", "other", 1000..1400);
    let filler: Vec<Table> = (0..6)
        .map(|j| keyed(&format!("filler_{j}"), "c", sample(&mut rng, 1000, 200).into_vec()))
        .collect();
    let mut tables = vec![dup, disjoint];
    tables.extend(filler);
    (base, LakeCatalog::from_tables(tables).unwrap())
}

#[test]
fn minhash_seeded_trials() {
    let mut dup_found = 0;
    let mut disjoint_absent = 0;
    for seed in 0..100 {
        let (base, cat) = trial_lake(seed);
        let index = LshEnsembleIndex::build(
            &cat,
            LshParams {
                seed,
                ..LshParams::default()
            },
        )
        .unwrap();
        let q = QuerySpec::new(&base, "q", RetrievalMethod::MinHash).unwrap();
        let pool = minhash_pool(&index, &q).unwrap();
        dup_found += pool.iter().any(|(t, _)| t == "dup") as usize;
        disjoint_absent += !pool.iter().any(|(t, _)| t == "disjoint") as usize;

        let res = minhash_query(&index, &q).unwrap();
        assert!(res.iter().all(|c| c.score == Score::Unranked));
        if pool.len() > 2 {
            let cut = minhash_query(&index, &q.clone().with_top_k(2)).unwrap();
            assert_eq!(cut.len(), 2);
        }
    }
    assert!(dup_found >= 99, "duplicate found in {dup_found}/100");
    assert!(disjoint_absent >= 99, "disjoint absent in {disjoint_absent}/100");
}

#[test]
fn planted_containments_exact_and_hybrid() {
    let base = keyed("base", "q", 0..100);
    let cat = LakeCatalog::from_tables(vec![
        keyed("c30", "k", (0..30).chain(500..600)),
        keyed("c60", "k", 40..100),
        keyed("c100", "k", 0..100),
    ])
    .unwrap();
    let q = QuerySpec::new(&base, "q", RetrievalMethod::Exact).unwrap().with_top_k(2);
    let ex = exact_match(&q, &cat).unwrap();
    let got: Vec<(&str, Option<f64>)> = ex.iter().map(|c| (c.table_name.as_str(), c.score.value())).collect();
    assert_eq!(got, vec![("c100", Some(1.0)), ("c60", Some(0.6))]);

    let index = LshEnsembleIndex::build(&cat, LshParams::default()).unwrap();
    let hq = QuerySpec::new(&base, "q", RetrievalMethod::Hybrid).unwrap().with_threshold(0.2);
    let pool = minhash_pool(&index, &hq).unwrap();
    let hybrid = hybrid_query(&index, &hq, &cat).unwrap();
    let full = exact_match(&q.clone().with_top_k(30), &cat).unwrap();
    let restricted: Vec<_> = full
        .iter()
        .filter(|c| pool.contains(&(c.table_name.clone(), c.column_name.clone())))
        .map(|c| (c.table_name.clone(), c.score))
        .collect();
    let h: Vec<_> = hybrid.iter().map(|c| (c.table_name.clone(), c.score)).collect();
    assert_eq!(h, restricted);
}

#[test]
fn experiment_is_deterministic() {
    let ws = fixtures::redundancy_lake(4).workspace().unwrap();
    let cfg = regression(SelectorKind::StepwiseGreedy, 4);
    let a: Vec<_> = run_experiment(&ws, &cfg).unwrap().iter().map(|r| r.without_timings()).collect();
    let b: Vec<_> = run_experiment(&ws, &cfg).unwrap().iter().map(|r| r.without_timings()).collect();
    assert_eq!(a.len(), 5);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}
