//! Aggregation, left joins and the join selectors that build augmented
//! tables from retrieved candidates.

pub mod aggregate;
pub mod join;
pub mod plan;
pub mod selectors;

pub use aggregate::{
    aggregate, aggregate_any_seeded, dfs_arity, group_rows, AggregationPolicy, DFS_CATEGORICAL_STATS,
    DFS_NUMERIC_STATS,
};
pub use join::left_join;
pub use plan::{prepare_candidate, MergePlan, PlannedJoin, PLAN_HEADER};
pub use selectors::{
    inner_split, rerank_by_containment, run_selector, select_best_single, select_full_join,
    select_highest_containment, select_stepwise_greedy, SelectorInput, SelectorKind, SelectorOutcome,
    StageTimings, DEFAULT_MAX_ITER, INNER_TRAIN_FRACTION,
};
