use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::LakeCatalog;
use crate::error::{Error, Result};
use crate::merge::{run_selector, AggregationPolicy, SelectorInput, SelectorKind, DEFAULT_MAX_ITER};
use crate::predict::{self, PredictorConfig, Task};
use crate::retrieval::{
    containment, retrieve, LshEnsembleIndex, LshParams, QuerySpec, RetrievalMethod, DEFAULT_THRESHOLD,
    DEFAULT_TOP_K,
};
use crate::table::{distinct_values, read_csv, DType, Table};

use super::meter::MemoryMeter;
use super::split::kfold;

pub const STATUS_OK: &str = "ok";
pub const STATUS_BASELINE: &str = "baseline_only";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub lake: PathBuf,
    pub base_table: PathBuf,
    pub query_column: String,
    pub target_column: String,
    /// `None` infers the task from the target column.
    pub task: Option<Task>,
    pub retrieval: RetrievalMethod,
    pub selector: SelectorKind,
    pub aggregation: AggregationPolicy,
    /// `ridge` or `gbdt`.
    pub predictor: String,
    pub top_k: usize,
    pub n_folds: usize,
    pub seed: u64,
    pub threshold: f64,
    pub num_perm: usize,
    pub num_partitions: usize,
    pub max_iter: usize,
    /// Reduce the base table to the query and target columns first.
    pub deplete: bool,
}

impl ExperimentConfig {
    pub fn new(query_column: impl Into<String>, target_column: impl Into<String>) -> ExperimentConfig {
        ExperimentConfig {
            lake: PathBuf::new(),
            base_table: PathBuf::new(),
            query_column: query_column.into(),
            target_column: target_column.into(),
            task: None,
            retrieval: RetrievalMethod::Exact,
            selector: SelectorKind::BestSingle,
            aggregation: AggregationPolicy::Any,
            predictor: "gbdt".into(),
            top_k: DEFAULT_TOP_K,
            n_folds: 5,
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            num_perm: 256,
            num_partitions: 8,
            max_iter: DEFAULT_MAX_ITER,
            deplete: true,
        }
    }

    /// `retrieval|selector|aggregation|predictor|k<top_k>`. Seeds and folds
    /// are not part of the id.
    pub fn config_id(&self) -> String {
        format!(
            "{}|{}|{}|{}|k{}",
            self.retrieval, self.selector, self.aggregation, self.predictor, self.top_k
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::InvalidParameter("n_folds must be at least 2".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidParameter("top_k must be at least 1".into()));
        }
        if self.query_column == self.target_column {
            return Err(Error::InvalidParameter(
                "query column and target column must differ".into(),
            ));
        }
        PredictorConfig::from_name(&self.predictor, Task::Regression)?;
        Ok(())
    }
}

/// One (configuration, seed, fold) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub config_id: String,
    pub retrieval: String,
    pub selector: String,
    pub aggregation: String,
    pub predictor: String,
    pub top_k: usize,
    pub seed: u64,
    pub fold: usize,
    pub metric: String,
    /// NaN when the cell failed.
    pub value: f64,
    pub status: String,
    pub retrieval_s: f64,
    pub prepare_s: f64,
    pub train_join_s: f64,
    pub train_model_s: f64,
    pub predict_join_s: f64,
    pub predict_model_s: f64,
    pub peak_bytes: usize,
    pub n_candidates: usize,
    pub n_selected: usize,
    pub mean_containment: f64,
}

impl EvalRecord {
    pub fn total_time(&self) -> f64 {
        self.retrieval_s
            + self.prepare_s
            + self.train_join_s
            + self.train_model_s
            + self.predict_join_s
            + self.predict_model_s
    }

    pub fn is_ok(&self) -> bool {
        self.value.is_finite() && !self.status.starts_with("failed")
    }

    /// The record with every wall-clock field zeroed.
    pub fn without_timings(&self) -> EvalRecord {
        EvalRecord {
            retrieval_s: 0.0,
            prepare_s: 0.0,
            train_join_s: 0.0,
            train_model_s: 0.0,
            predict_join_s: 0.0,
            predict_model_s: 0.0,
            ..self.clone()
        }
    }
}

type IndexKey = (u64, usize, usize, u64);

/// A loaded lake and base table, with LSH indexes cached per parameter
/// set so repeated runs share them.
pub struct Workspace {
    pub catalog: Arc<LakeCatalog>,
    pub base: Arc<Table>,
    indexes: Mutex<HashMap<IndexKey, Arc<LshEnsembleIndex>>>,
}

impl Workspace {
    pub fn new(catalog: LakeCatalog, base: Table) -> Workspace {
        Workspace {
            catalog: Arc::new(catalog),
            base: Arc::new(base),
            indexes: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(lake: &Path, base_table: &Path) -> Result<Workspace> {
        let catalog = LakeCatalog::scan(lake)?;
        let base = read_csv(base_table, None)?;
        Ok(Workspace::new(catalog, base))
    }

    pub fn index(&self, threshold: f64, num_perm: usize, num_partitions: usize, seed: u64) -> Result<Arc<LshEnsembleIndex>> {
        let key = (threshold.to_bits(), num_perm, num_partitions, seed);
        if let Some(ix) = self.indexes.lock().unwrap().get(&key) {
            return Ok(ix.clone());
        }
        let built = Arc::new(LshEnsembleIndex::build(
            &self.catalog,
            LshParams {
                threshold,
                num_perm,
                num_partitions,
                seed,
                ..LshParams::default()
            },
        )?);
        Ok(self
            .indexes
            .lock()
            .unwrap()
            .entry(key)
            .or_insert(built)
            .clone())
    }
}

/// Projection onto `[key, target]`.
pub fn deplete(base: &Table, key: &str, target: &str) -> Result<Table> {
    if key == target {
        return Err(Error::InvalidParameter("key and target must differ".into()));
    }
    base.project(&[key, target])
}

/// Binary classification when the target has exactly two distinct values
/// (or is categorical), regression otherwise.
pub fn infer_task(base: &Table, target: &str) -> Result<Task> {
    let col = base.require_column(target)?;
    let distinct = distinct_values(col).len();
    match col.dtype() {
        DType::Categorical if distinct <= 2 => Ok(Task::BinaryClassification),
        DType::Categorical => Err(Error::InvalidParameter(format!(
            "categorical target `{target}` has {distinct} classes; only binary tasks are supported"
        ))),
        DType::Numeric if distinct == 2 => Ok(Task::BinaryClassification),
        DType::Numeric => Ok(Task::Regression),
    }
}

struct FoldResult {
    value: f64,
    status: String,
    retrieval_s: f64,
    timings: crate::merge::StageTimings,
    n_candidates: usize,
    n_selected: usize,
    mean_containment: f64,
}

fn run_fold(
    ws: &Workspace,
    cfg: &ExperimentConfig,
    base: &Table,
    predictor: &PredictorConfig,
    train_rows: &[usize],
    test_rows: &[usize],
    meter: &MemoryMeter,
) -> Result<FoldResult> {
    let train = base.take(train_rows);
    let test = base.take(test_rows);
    meter.observe(train.byte_size());
    let metric = predictor.task.metric();

    let start = Instant::now();
    let index = if cfg.retrieval.needs_index() {
        Some(ws.index(cfg.threshold, cfg.num_perm, cfg.num_partitions, cfg.seed)?)
    } else {
        None
    };
    let q = QuerySpec::new(&train, &cfg.query_column, cfg.retrieval)?
        .with_top_k(cfg.top_k)
        .with_threshold(cfg.threshold);
    let candidates = retrieve(&q, &ws.catalog, index.as_deref())?;
    let retrieval_s = start.elapsed().as_secs_f64();

    let query = distinct_values(train.require_column(&cfg.query_column)?);
    let mean_containment = if candidates.is_empty() {
        0.0
    } else {
        let mut s = 0.0;
        for c in &candidates {
            s += containment(&query, ws.catalog.column_keys(&c.table_name, &c.column_name)?)?;
        }
        s / candidates.len() as f64
    };

    if candidates.is_empty() {
        let mut timings = crate::merge::StageTimings::default();
        let t0 = Instant::now();
        let model = predict::fit(&train.drop_columns(&[&cfg.query_column]), &cfg.target_column, predictor, cfg.seed)?;
        timings.train_model = t0.elapsed().as_secs_f64();
        timings.n_fits = 1;
        meter.observe(model.working_bytes());
        let t1 = Instant::now();
        let value = predict::score(&model, &test, &cfg.target_column, metric)?;
        timings.predict_model = t1.elapsed().as_secs_f64();
        return Ok(FoldResult {
            value,
            status: STATUS_BASELINE.into(),
            retrieval_s,
            timings,
            n_candidates: 0,
            n_selected: 0,
            mean_containment,
        });
    }

    let input = SelectorInput {
        train: &train,
        query_column: &cfg.query_column,
        target: &cfg.target_column,
        candidates: &candidates,
        catalog: &ws.catalog,
        aggregation: cfg.aggregation,
        predictor,
        seed: cfg.seed,
        max_iter: cfg.max_iter,
        meter: Some(meter),
    };
    let outcome = run_selector(cfg.selector, &input)?;
    let mut timings = outcome.timings;

    let t0 = Instant::now();
    let test_aug = outcome.plan.apply(&test, &ws.catalog)?;
    timings.predict_join = t0.elapsed().as_secs_f64();
    meter.observe(test_aug.byte_size());

    let t1 = Instant::now();
    let value = predict::score(&outcome.model, &test_aug, &cfg.target_column, metric)?;
    timings.predict_model = t1.elapsed().as_secs_f64();

    Ok(FoldResult {
        value,
        status: STATUS_OK.into(),
        retrieval_s,
        timings,
        n_candidates: candidates.len(),
        n_selected: outcome.plan.joins.len(),
        mean_containment,
    })
}

/// Runs every outer fold of one configuration. A fold that fails yields a
/// record with status `failed: <reason>` and a NaN value.
pub fn run_experiment(ws: &Workspace, cfg: &ExperimentConfig) -> Result<Vec<EvalRecord>> {
    cfg.validate()?;
    let base = if cfg.deplete {
        deplete(&ws.base, &cfg.query_column, &cfg.target_column)?
    } else {
        ws.base.as_ref().clone()
    };
    base.require_column(&cfg.query_column)?;
    let task = match cfg.task {
        Some(t) => t,
        None => infer_task(&base, &cfg.target_column)?,
    };
    let predictor = PredictorConfig::from_name(&cfg.predictor, task)?;
    let folds = kfold(base.n_rows(), cfg.n_folds, cfg.seed)?;

    let records = folds
        .par_iter()
        .enumerate()
        .map(|(f, (train_rows, test_rows))| {
            let meter = MemoryMeter::new();
            let r = run_fold(ws, cfg, &base, &predictor, train_rows, test_rows, &meter);
            let mut rec = EvalRecord {
                config_id: cfg.config_id(),
                retrieval: cfg.retrieval.to_string(),
                selector: cfg.selector.to_string(),
                aggregation: cfg.aggregation.to_string(),
                predictor: cfg.predictor.clone(),
                top_k: cfg.top_k,
                seed: cfg.seed,
                fold: f,
                metric: task.metric().to_string(),
                value: f64::NAN,
                status: String::new(),
                retrieval_s: 0.0,
                prepare_s: 0.0,
                train_join_s: 0.0,
                train_model_s: 0.0,
                predict_join_s: 0.0,
                predict_model_s: 0.0,
                peak_bytes: 0,
                n_candidates: 0,
                n_selected: 0,
                mean_containment: 0.0,
            };
            match r {
                Ok(fr) => {
                    rec.value = fr.value;
                    rec.status = fr.status;
                    rec.retrieval_s = fr.retrieval_s;
                    rec.prepare_s = fr.timings.prepare;
                    rec.train_join_s = fr.timings.train_join;
                    rec.train_model_s = fr.timings.train_model;
                    rec.predict_join_s = fr.timings.predict_join;
                    rec.predict_model_s = fr.timings.predict_model;
                    rec.n_candidates = fr.n_candidates;
                    rec.n_selected = fr.n_selected;
                    rec.mean_containment = fr.mean_containment;
                }
                Err(e) => rec.status = format!("failed: {e}"),
            }
            rec.peak_bytes = meter.peak();
            rec
        })
        .collect();
    Ok(records)
}

/// Loads the lake and base table named in `cfg` and runs it.
pub fn run_experiment_files(cfg: &ExperimentConfig) -> Result<Vec<EvalRecord>> {
    let ws = Workspace::open(&cfg.lake, &cfg.base_table)?;
    run_experiment(&ws, cfg)
}

/// Runs a configuration matrix, configurations in parallel, records in
/// input order.
pub fn run_matrix(ws: &Workspace, cfgs: &[ExperimentConfig]) -> Result<Vec<EvalRecord>> {
    let per_cfg = cfgs
        .par_iter()
        .map(|c| run_experiment(ws, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_cfg.into_iter().flatten().collect())
}

/// Full Join runs of `cfg` for each budget in `k_values`.
pub fn topk_sweep(
    ws: &Workspace,
    cfg: &ExperimentConfig,
    k_values: &[usize],
) -> Result<Vec<(usize, Vec<EvalRecord>)>> {
    if cfg.selector != SelectorKind::FullJoin {
        return Err(Error::InvalidParameter("top-k sweeps use the full_join selector".into()));
    }
    k_values
        .iter()
        .map(|&k| {
            let c = ExperimentConfig {
                top_k: k,
                ..cfg.clone()
            };
            run_experiment(ws, &c).map(|r| (k, r))
        })
        .collect()
}

pub fn write_records(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    for r in records {
        w.serialize(r)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    r.deserialize()
        .map(|rec| rec.map_err(|e| Error::Report(format!("{}: {e}", path.display()))))
        .collect()
}
