pub mod config;
pub mod experiment;
pub mod meter;
pub mod report;
pub mod split;

pub use config::{load_config, parse_config};
pub use experiment::{
    deplete, infer_task, read_records, run_experiment, run_experiment_files, run_matrix, topk_sweep,
    write_records, EvalRecord, ExperimentConfig, Workspace, STATUS_BASELINE, STATUS_OK,
};
pub use meter::MemoryMeter;
pub use report::{
    ablation_csv, ablation_report, median, non_dominated, pareto_csv, pareto_report, topk_curve, write_report,
    AblationRow, Dimension, ParetoRow, ReferenceConfig,
};
pub use split::kfold;
