//! Join selectors: which retrieved candidates end up in the augmented
//! table.
//!
//! All selectors work on the training split of the base table. Selectors
//! that compare candidates split it once more into inner train and inner
//! validation rows (0.8 / 0.2) and compare validation scores; the final
//! model is always refit on the whole training split.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::LakeCatalog;
use crate::error::{Error, Result};
use crate::evaluate::meter::MemoryMeter;
use crate::predict::{self, FittedModel, PredictorConfig};
use crate::retrieval::{containment, CandidateJoin, Score};
use crate::table::{distinct_values, Table};

use super::aggregate::AggregationPolicy;
use super::join::left_join;
use super::plan::{prepare_candidate, MergePlan};

pub const INNER_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_MAX_ITER: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectorKind {
    HighestContainment,
    BestSingle,
    FullJoin,
    StepwiseGreedy,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 4] = [
        SelectorKind::HighestContainment,
        SelectorKind::BestSingle,
        SelectorKind::FullJoin,
        SelectorKind::StepwiseGreedy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::HighestContainment => "highest_containment",
            SelectorKind::BestSingle => "best_single",
            SelectorKind::FullJoin => "full_join",
            SelectorKind::StepwiseGreedy => "stepwise_greedy",
        }
    }

    /// Whether the selector compares candidates with inner model fits.
    pub fn trains_models(self) -> bool {
        matches!(self, SelectorKind::BestSingle | SelectorKind::StepwiseGreedy)
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "highest_containment" => Ok(SelectorKind::HighestContainment),
            "best_single" => Ok(SelectorKind::BestSingle),
            "full_join" => Ok(SelectorKind::FullJoin),
            "stepwise_greedy" => Ok(SelectorKind::StepwiseGreedy),
            other => Err(Error::InvalidParameter(format!("unknown selector `{other}`"))),
        }
    }
}

/// Seconds spent per stage. Work done in parallel is summed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub prepare: f64,
    pub train_join: f64,
    pub train_model: f64,
    pub predict_join: f64,
    pub predict_model: f64,
    /// Model fits, the final refit included.
    pub n_fits: usize,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.prepare + self.train_join + self.train_model + self.predict_join + self.predict_model
    }

    fn absorb(&mut self, o: &StageTimings) {
        self.prepare += o.prepare;
        self.train_join += o.train_join;
        self.train_model += o.train_model;
        self.predict_join += o.predict_join;
        self.predict_model += o.predict_model;
        self.n_fits += o.n_fits;
    }
}

pub struct SelectorInput<'a> {
    /// Training split of the base table.
    pub train: &'a Table,
    pub query_column: &'a str,
    pub target: &'a str,
    pub candidates: &'a [CandidateJoin],
    pub catalog: &'a LakeCatalog,
    pub aggregation: AggregationPolicy,
    pub predictor: &'a PredictorConfig,
    pub seed: u64,
    /// Candidates Stepwise Greedy may test.
    pub max_iter: usize,
    pub meter: Option<&'a MemoryMeter>,
}

#[derive(Debug, Clone)]
pub struct SelectorOutcome {
    pub plan: MergePlan,
    /// Inner-validation score per evaluated candidate, in evaluation order.
    pub validation_scores: Vec<(CandidateJoin, f64)>,
    /// Baseline score followed by the score after each accepted candidate
    /// (Stepwise Greedy only).
    pub accepted_scores: Vec<f64>,
    /// Candidates never evaluated because of the iteration budget.
    pub untested: Vec<CandidateJoin>,
    /// Final model, fit on the whole training split.
    pub model: FittedModel,
    /// Augmented training split the final model was fit on.
    pub augmented: Table,
    pub timings: StageTimings,
}

/// Seeded `(inner_train, inner_valid)` row indices, each sorted.
pub fn inner_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = ((n as f64) * (1.0 - INNER_TRAIN_FRACTION)).round() as usize;
    let n_valid = if n >= 2 { n_valid.clamp(1, n - 1) } else { 0 };
    let (v, t) = idx.split_at(n_valid);
    let mut t = t.to_vec();
    let mut v = v.to_vec();
    t.sort_unstable();
    v.sort_unstable();
    (t, v)
}

/// Candidates re-ranked by exact containment of the training-split query
/// keys, ties by `(table, column)`.
pub fn rerank_by_containment(
    train: &Table,
    query_column: &str,
    candidates: &[CandidateJoin],
    cat: &LakeCatalog,
) -> Result<Vec<CandidateJoin>> {
    let query = distinct_values(train.require_column(query_column)?);
    let mut scored = candidates
        .iter()
        .map(|c| {
            let keys = cat.column_keys(&c.table_name, &c.column_name)?;
            Ok((c.clone(), containment(&query, keys)?))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.table_name.cmp(&b.0.table_name))
            .then_with(|| a.0.column_name.cmp(&b.0.column_name))
    });
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (mut c, s))| {
            c.score = Score::Containment(s);
            c.rank = i + 1;
            c
        })
        .collect())
}

impl<'a> SelectorInput<'a> {
    fn observe(&self, bytes: usize) {
        if let Some(m) = self.meter {
            m.observe(bytes);
        }
    }

    fn plan(&self, kind: SelectorKind) -> MergePlan {
        MergePlan::new(kind, self.aggregation, self.query_column, self.target)
    }

    fn prepare(&self, cands: &[CandidateJoin], t: &mut StageTimings) -> Result<Vec<Arc<Table>>> {
        let start = Instant::now();
        let out = cands
            .par_iter()
            .map(|c| prepare_candidate(self.catalog, c, self.aggregation, self.target).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        t.prepare += start.elapsed().as_secs_f64();
        Ok(out)
    }

    fn join(&self, current: &Table, cand: &CandidateJoin, right: &Table, t: &mut StageTimings) -> Result<Table> {
        let start = Instant::now();
        let out = left_join(current, right, self.query_column, &cand.column_name)?;
        t.train_join += start.elapsed().as_secs_f64();
        self.observe(out.byte_size());
        Ok(out)
    }

    fn fit(&self, table: &Table, t: &mut StageTimings) -> Result<FittedModel> {
        let start = Instant::now();
        let model = predict::fit(&table.drop_columns(&[self.query_column]), self.target, self.predictor, self.seed);
        t.train_model += start.elapsed().as_secs_f64();
        t.n_fits += 1;
        let model = model?;
        self.observe(model.working_bytes());
        Ok(model)
    }

    /// Inner-validation score of `table`; failed fits or undefined metrics
    /// score negative infinity.
    fn validate(&self, table: &Table, split: &(Vec<usize>, Vec<usize>), t: &mut StageTimings) -> f64 {
        let inner = table.take(&split.0);
        let valid = table.take(&split.1);
        let Ok(model) = self.fit(&inner, t) else {
            return f64::NEG_INFINITY;
        };
        let start = Instant::now();
        let s = predict::score(&model, &valid, self.target, self.predictor.task.metric());
        t.train_model += start.elapsed().as_secs_f64();
        s.unwrap_or(f64::NEG_INFINITY)
    }

    fn finish(
        &self,
        plan: MergePlan,
        prepared: &[Arc<Table>],
        mut timings: StageTimings,
        validation_scores: Vec<(CandidateJoin, f64)>,
        accepted_scores: Vec<f64>,
        untested: Vec<CandidateJoin>,
    ) -> Result<SelectorOutcome> {
        let start = Instant::now();
        let augmented = plan.apply_prepared(self.train, prepared)?;
        timings.train_join += start.elapsed().as_secs_f64();
        self.observe(augmented.byte_size());
        let model = self.fit(&augmented, &mut timings)?;
        Ok(SelectorOutcome {
            plan,
            validation_scores,
            accepted_scores,
            untested,
            model,
            augmented,
            timings,
        })
    }

    fn check(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::InvalidParameter("selectors need at least one candidate".into()));
        }
        self.train.require_column(self.query_column)?;
        self.train.require_column(self.target)?;
        Ok(())
    }
}

/// Top-1 candidate by exact containment; no model fits during selection.
pub fn select_highest_containment(input: &SelectorInput<'_>) -> Result<SelectorOutcome> {
    input.check()?;
    let mut t = StageTimings::default();
    let ranked = rerank_by_containment(input.train, input.query_column, input.candidates, input.catalog)?;
    let best = ranked[0].clone();
    let prepared = input.prepare(std::slice::from_ref(&best), &mut t)?;
    let mut plan = input.plan(SelectorKind::HighestContainment);
    plan.push(best);
    input.finish(plan, &prepared, t, Vec::new(), Vec::new(), Vec::new())
}

/// Every candidate is joined alone and scored on inner validation; the
/// best one wins, the earliest on ties.
pub fn select_best_single(input: &SelectorInput<'_>) -> Result<SelectorOutcome> {
    input.check()?;
    let mut t = StageTimings::default();
    let prepared = input.prepare(input.candidates, &mut t)?;
    let split = inner_split(input.train.n_rows(), input.seed);
    let results = input
        .candidates
        .par_iter()
        .zip(&prepared)
        .map(|(c, right)| {
            let mut local = StageTimings::default();
            let joined = input.join(input.train, c, right, &mut local)?;
            let s = input.validate(&joined, &split, &mut local);
            Ok((s, local))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    let mut scores = Vec::with_capacity(results.len());
    for (i, (s, local)) in results.iter().enumerate() {
        t.absorb(local);
        if *s > results[best].0 {
            best = i;
        }
        scores.push((input.candidates[i].clone(), *s));
    }
    let mut plan = input.plan(SelectorKind::BestSingle);
    plan.push(input.candidates[best].clone());
    input.finish(plan, &prepared[best..=best], t, scores, Vec::new(), Vec::new())
}

/// All candidates joined in rank order, one fit.
pub fn select_full_join(input: &SelectorInput<'_>) -> Result<SelectorOutcome> {
    input.check()?;
    let mut t = StageTimings::default();
    let prepared = input.prepare(input.candidates, &mut t)?;
    let mut plan = input.plan(SelectorKind::FullJoin);
    for c in input.candidates {
        plan.push(c.clone());
    }
    input.finish(plan, &prepared, t, Vec::new(), Vec::new(), Vec::new())
}

/// Greedy forward selection: candidates in containment order are kept
/// only if they strictly improve the inner-validation score of the
/// current table.
pub fn select_stepwise_greedy(input: &SelectorInput<'_>) -> Result<SelectorOutcome> {
    input.check()?;
    let mut t = StageTimings::default();
    let ranked = rerank_by_containment(input.train, input.query_column, input.candidates, input.catalog)?;
    let budget = input.max_iter.min(ranked.len());
    let (tested, untested) = ranked.split_at(budget);
    let prepared = input.prepare(tested, &mut t)?;
    let split = inner_split(input.train.n_rows(), input.seed);

    let mut current = input.train.clone();
    let mut best = input.validate(&current, &split, &mut t);
    let mut accepted_scores = vec![best];
    let mut validation_scores = Vec::with_capacity(tested.len());
    let mut plan = input.plan(SelectorKind::StepwiseGreedy);
    let mut kept = Vec::new();
    for (c, right) in tested.iter().zip(&prepared) {
        let joined = input.join(&current, c, right, &mut t)?;
        let s = input.validate(&joined, &split, &mut t);
        validation_scores.push((c.clone(), s));
        if s > best {
            best = s;
            current = joined;
            accepted_scores.push(s);
            plan.push(c.clone());
            kept.push(right.clone());
        }
    }
    input.finish(plan, &kept, t, validation_scores, accepted_scores, untested.to_vec())
}

pub fn run_selector(kind: SelectorKind, input: &SelectorInput<'_>) -> Result<SelectorOutcome> {
    match kind {
        SelectorKind::HighestContainment => select_highest_containment(input),
        SelectorKind::BestSingle => select_best_single(input),
        SelectorKind::FullJoin => select_full_join(input),
        SelectorKind::StepwiseGreedy => select_stepwise_greedy(input),
    }
}
