use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lakejoin::catalog::LakeCatalog;
use lakejoin::evaluate::{
    ablation_csv, ablation_report, load_config, pareto_csv, pareto_report, read_records, run_matrix,
    topk_curve, write_records, EvalRecord, ReferenceConfig, Workspace,
};
use lakejoin::merge::{run_selector, AggregationPolicy, MergePlan, SelectorInput, SelectorKind};
use lakejoin::predict::{FittedModel, PredictorConfig, Task};
use lakejoin::retrieval::{retrieve, CandidateJoin, LshEnsembleIndex, LshParams, QuerySpec, RetrievalMethod, Score};
use lakejoin::synth::{generate, write_lake, SynthParams, TripletStore, Variant};
use lakejoin::table::{read_csv, write_csv, write_csv_to_writer, Column, Table};

#[derive(Parser)]
#[command(name = "lakejoin", version, about = "Join discovery and table augmentation over CSV data lakes")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a MinHash LSH Ensemble index over every lake column.
    Index(IndexArgs),
    /// Rank lake columns joinable with a query column.
    Query(QueryArgs),
    /// Select and join candidates onto a table, or replay a saved plan.
    Augment(AugmentArgs),
    /// Score a table with a saved model.
    Predict(PredictArgs),
    /// Run a cross-validated experiment matrix.
    Evaluate(EvaluateArgs),
    /// Generate a lake from a triplet file.
    Synth(SynthArgs),
    /// Summarize evaluation records.
    Report(ReportArgs),
}

#[derive(Args)]
struct LakeArg {
    /// Lake root directory.
    #[arg(long, env = "LAKEJOIN_LAKE")]
    lake: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexMethod {
    Minhash,
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    lake: LakeArg,
    #[arg(long, value_enum, default_value = "minhash")]
    method: IndexMethod,
    #[arg(long, default_value_t = 0.2)]
    threshold: f64,
    #[arg(long, default_value_t = 256)]
    num_perm: usize,
    #[arg(long, default_value_t = 8)]
    partitions: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct RetrievalArgs {
    /// Lake root; required for exact and hybrid retrieval.
    #[arg(long, env = "LAKEJOIN_LAKE")]
    lake: Option<PathBuf>,
    /// Index file; built from the lake on the fly when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, default_value = "exact")]
    method: RetrievalMethod,
    #[arg(long, default_value_t = 30)]
    top_k: usize,
    #[arg(long, default_value_t = 0.2)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    retrieval: RetrievalArgs,
    /// Base table CSV.
    #[arg(long)]
    table: PathBuf,
    /// Query column of the base table.
    #[arg(long)]
    column: String,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[arg(long)]
    table: PathBuf,
    /// Query column; read from the plan when replaying.
    #[arg(long)]
    column: Option<String>,
    /// Target column the selector optimizes.
    #[arg(long)]
    target: Option<String>,
    /// Replay this plan instead of selecting.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, default_value = "best_single")]
    selector: SelectorKind,
    #[arg(long, default_value = "any")]
    aggregation: AggregationPolicy,
    #[arg(long, default_value = "gbdt")]
    predictor: String,
    /// regression or classification; inferred from the target when absent.
    #[arg(long)]
    task: Option<Task>,
    #[arg(long, default_value_t = 30)]
    max_iter: usize,
    /// Augmented table CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to save the selected plan.
    #[arg(long)]
    plan_out: Option<PathBuf>,
    /// Where to save the model fit on the augmented table.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    table: PathBuf,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Run every configuration once with this seed instead of the listed seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    triplets: PathBuf,
    #[arg(long, default_value = "binary")]
    variant: Variant,
    /// Sub-tables per seed table (sampled).
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Minimum seed arity (sampled).
    #[arg(long, default_value_t = 8)]
    arity: usize,
    /// Row fraction of each replica (sampled).
    #[arg(long, default_value_t = 0.7)]
    p: f64,
    /// Replicas per sub-table (sampled).
    #[arg(long, default_value_t = 2)]
    ns: usize,
    /// Smallest sub-table kept (base).
    #[arg(long, default_value_t = 100)]
    min_rows: usize,
    #[arg(long, default_value_t = 2)]
    max_multivalue: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of record CSVs written by `evaluate`.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    pareto: bool,
    #[arg(long)]
    ablation: bool,
    /// Metric and peak bytes per top-k budget.
    #[arg(long)]
    topk: bool,
    #[arg(long, default_value = "default")]
    reference: String,
    /// Directory for report CSVs (default: the runs directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Failure {
        Failure::Data(e)
    }
}

impl From<lakejoin::error::Error> for Failure {
    fn from(e: lakejoin::error::Error) -> Failure {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn open_output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

struct Retriever {
    catalog: Option<LakeCatalog>,
    index: Option<LshEnsembleIndex>,
}

impl Retriever {
    fn open(a: &RetrievalArgs) -> Result<Retriever, Failure> {
        let needs_lake = a.method != RetrievalMethod::MinHash || a.index.is_none();
        let catalog = match (&a.lake, needs_lake) {
            (Some(l), _) => Some(LakeCatalog::scan(l)?),
            (None, true) => return Err(usage(format!("--lake is required for {} retrieval", a.method))),
            (None, false) => None,
        };
        let index = if a.method.needs_index() {
            Some(match &a.index {
                Some(p) => LshEnsembleIndex::load(p)?,
                None => LshEnsembleIndex::build(
                    catalog.as_ref().expect("lake is loaded without an index"),
                    LshParams {
                        threshold: a.threshold,
                        seed: a.seed,
                        ..LshParams::default()
                    },
                )?,
            })
        } else {
            None
        };
        Ok(Retriever { catalog, index })
    }

    fn catalog(&self) -> Result<&LakeCatalog, Failure> {
        self.catalog
            .as_ref()
            .ok_or_else(|| usage("--lake is required to join candidates"))
    }

    fn retrieve(&self, a: &RetrievalArgs, table: &Table, column: &str) -> Result<Vec<CandidateJoin>, Failure> {
        let q = QuerySpec::new(table, column, a.method)?
            .with_top_k(a.top_k)
            .with_threshold(a.threshold);
        let empty;
        let cat = match &self.catalog {
            Some(c) => c,
            None => {
                empty = LakeCatalog::from_tables(Vec::new())?;
                &empty
            }
        };
        Ok(retrieve(&q, cat, self.index.as_ref())?)
    }
}

fn cmd_index(a: IndexArgs) -> CmdResult {
    let IndexMethod::Minhash = a.method;
    let cat = LakeCatalog::scan(&a.lake.lake)?;
    let index = LshEnsembleIndex::build(
        &cat,
        LshParams {
            threshold: a.threshold,
            num_perm: a.num_perm,
            num_partitions: a.partitions,
            seed: a.seed,
            ..LshParams::default()
        },
    )?;
    index.save(&a.out)?;
    eprintln!(
        "indexed {} columns from {} tables into {}",
        index.len(),
        cat.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_query(a: QueryArgs) -> CmdResult {
    let table = read_csv(&a.table, None)?;
    let r = Retriever::open(&a.retrieval)?;
    let cands = r.retrieve(&a.retrieval, &table, &a.column)?;
    let mut out = open_output(&None)?;
    let io_err = |e: io::Error| Failure::Data(e.into());
    match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["rank", "table", "column", "containment"])
                .map_err(|e| Failure::Data(e.into()))?;
            for c in &cands {
                let score = match c.score {
                    Score::Containment(s) => s.to_string(),
                    Score::Unranked => String::new(),
                };
                w.write_record([c.rank.to_string(), c.table_name.clone(), c.column_name.clone(), score])
                    .map_err(|e| Failure::Data(e.into()))?;
            }
            w.flush().map_err(io_err)?;
        }
        Format::Jsonl => {
            for c in &cands {
                let line = serde_json::json!({
                    "rank": c.rank,
                    "table": c.table_name,
                    "column": c.column_name,
                    "containment": c.score.value(),
                });
                writeln!(out, "{line}").map_err(io_err)?;
            }
        }
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

fn cmd_augment(a: AugmentArgs) -> CmdResult {
    let table = read_csv(&a.table, None)?;
    if let Some(plan_path) = &a.plan {
        let plan = MergePlan::load(plan_path)?;
        let lake = a
            .retrieval
            .lake
            .as_ref()
            .ok_or_else(|| usage("--lake is required to replay a plan"))?;
        let cat = LakeCatalog::scan(lake)?;
        let out = plan.apply(&table, &cat)?;
        write_table(&out, &a.out)?;
        return Ok(());
    }
    let column = a.column.as_deref().ok_or_else(|| usage("--column is required without --plan"))?;
    let target = a.target.as_deref().ok_or_else(|| usage("--target is required without --plan"))?;
    let task = match a.task {
        Some(t) => t,
        None => lakejoin::evaluate::infer_task(&table, target)?,
    };
    let predictor = PredictorConfig::from_name(&a.predictor, task)?;
    let r = Retriever::open(&a.retrieval)?;
    let cands = r.retrieve(&a.retrieval, &table, column)?;
    if cands.is_empty() {
        return Err(Failure::Data(anyhow!("no joinable candidates for `{column}`")));
    }
    let input = SelectorInput {
        train: &table,
        query_column: column,
        target,
        candidates: &cands,
        catalog: r.catalog()?,
        aggregation: a.aggregation,
        predictor: &predictor,
        seed: a.retrieval.seed,
        max_iter: a.max_iter,
        meter: None,
    };
    let o = run_selector(a.selector, &input)?;
    for (c, s) in &o.validation_scores {
        eprintln!("validation {}.{}: {s:.4}", c.table_name, c.column_name);
    }
    eprintln!("selected {} of {} candidates", o.plan.joins.len(), cands.len());
    if let Some(p) = &a.plan_out {
        o.plan.save(p)?;
    }
    if let Some(p) = &a.model_out {
        o.model.save(p)?;
    }
    write_table(&o.augmented, &a.out)?;
    Ok(())
}

fn write_table(t: &Table, out: &Option<PathBuf>) -> CmdResult {
    match out {
        Some(p) => write_csv(t, p)?,
        None => write_csv_to_writer(t, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CmdResult {
    let model = FittedModel::load(&a.model)?;
    let table = read_csv(&a.table, None)?;
    let scores = model.predict(&table)?;
    let mut cols = vec![Column::numeric("prediction", scores.iter().map(|&s| Some(s)))];
    if model.task() == Task::BinaryClassification {
        let labels = model.predict_labels(&table)?;
        cols.push(Column::categorical("label", labels.into_iter().map(Some)));
    }
    write_table(&Table::new("predictions", cols)?, &a.out)
}

fn cmd_evaluate(a: EvaluateArgs) -> CmdResult {
    let mut cfgs = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        let mut seen = std::collections::HashSet::new();
        cfgs.retain(|c| seen.insert(c.config_id()));
        for c in &mut cfgs {
            c.seed = seed;
        }
    }
    let first = cfgs.first().ok_or_else(|| usage("the config expands to no runs"))?;
    let ws = Workspace::open(&first.lake, &first.base_table)?;
    let records = run_matrix(&ws, &cfgs)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let path = a.out.join("records.csv");
    write_records(&records, &path)?;
    let failed = records.iter().filter(|r| r.status.starts_with("failed")).count();
    eprintln!(
        "{} records from {} configurations written to {} ({failed} failed)",
        records.len(),
        cfgs.len(),
        path.display()
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let store = TripletStore::load(&a.triplets)?;
    let params = SynthParams {
        variant: a.variant,
        n: a.n,
        arity: a.arity,
        p: a.p,
        n_s: a.ns,
        min_rows: a.min_rows,
        max_multivalue: a.max_multivalue,
        seed: a.seed,
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let tables = generate(&store, &params)?;
    write_lake(&tables, &a.out)?;
    eprintln!("wrote {} {} tables to {}", tables.len(), a.variant, a.out.display());
    Ok(())
}

fn load_runs(dir: &Path) -> anyhow::Result<Vec<EvalRecord>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("records"))
        })
        .collect();
    files.sort();
    let mut all = Vec::new();
    for f in &files {
        all.extend(read_records(f)?);
    }
    if all.is_empty() {
        return Err(anyhow!("no records found in {}", dir.display()));
    }
    Ok(all)
}

fn cmd_report(a: ReportArgs) -> CmdResult {
    let reference = ReferenceConfig::from_name(&a.reference).map_err(|e| usage(e.to_string()))?;
    let records = load_runs(&a.runs)?;
    let out_dir = a.out.clone().unwrap_or_else(|| a.runs.clone());
    fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let (pareto, ablation) = if !a.pareto && !a.ablation && !a.topk {
        (true, true)
    } else {
        (a.pareto, a.ablation)
    };
    let mut stdout = io::stdout().lock();
    let mut emit = |name: &str, text: String| -> CmdResult {
        let path = out_dir.join(name);
        fs::write(&path, &text).with_context(|| format!("cannot write {}", path.display()))?;
        writeln!(stdout, "# {}\n{text}", path.display()).map_err(|e| Failure::Data(e.into()))?;
        Ok(())
    };
    if pareto {
        emit("pareto.csv", pareto_csv(&pareto_report(&records)))?;
    }
    if ablation {
        emit("ablation.csv", ablation_csv(&ablation_report(&records, &reference)?))?;
    }
    if a.topk {
        let mut s = String::from("top_k,mean_metric,peak_bytes\n");
        for (k, m, b) in topk_curve(&records) {
            s.push_str(&format!("{k},{m:.6},{b}\n"));
        }
        emit("topk.csv", s)?;
    }
    Ok(())
}

fn error_chain(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let s = cause.to_string();
        if msg.ends_with(&s) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&s);
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Query(a) => cmd_query(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("run with --help for usage");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", error_chain(&e));
            ExitCode::from(2)
        }
    }
}
