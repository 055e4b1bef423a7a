//! Replayable merge plans.
//!
//! Text format, one record per line:
//!
//! ```text
//! # merge-plan v1
//! selector=<highest_containment|best_single|full_join|stepwise_greedy>
//! aggregation=<any|mean|dfs>
//! query_column=<name>
//! target=<name>
//! candidate<TAB>rank<TAB>table<TAB>column<TAB>score|unranked<TAB>base_key
//! ```
//!
//! Candidate lines are listed in join order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::catalog::LakeCatalog;
use crate::error::{Error, Result};
use crate::retrieval::{CandidateJoin, Score};
use crate::table::Table;

use super::aggregate::{aggregate, AggregationPolicy};
use super::join::left_join;
use super::selectors::SelectorKind;

pub const PLAN_HEADER: &str = "# merge-plan v1";

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedJoin {
    pub candidate: CandidateJoin,
    /// Base-table column joined against `candidate.column_name`.
    pub base_key: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergePlan {
    pub selector: SelectorKind,
    pub aggregation: AggregationPolicy,
    pub query_column: String,
    pub target: String,
    pub joins: Vec<PlannedJoin>,
}

/// Aggregates a candidate's lake table on its join column and drops any
/// incoming column named like the target.
pub fn prepare_candidate(
    cat: &LakeCatalog,
    cand: &CandidateJoin,
    policy: AggregationPolicy,
    target: &str,
) -> Result<Table> {
    let lake = cat.table(&cand.table_name)?;
    let agg = aggregate(&lake.table, &cand.column_name, policy)?;
    if cand.column_name != target && agg.has_column(target) {
        Ok(agg.drop_columns(&[target]))
    } else {
        Ok(agg)
    }
}

impl MergePlan {
    pub fn new(
        selector: SelectorKind,
        aggregation: AggregationPolicy,
        query_column: impl Into<String>,
        target: impl Into<String>,
    ) -> MergePlan {
        MergePlan {
            selector,
            aggregation,
            query_column: query_column.into(),
            target: target.into(),
            joins: Vec::new(),
        }
    }

    pub fn push(&mut self, candidate: CandidateJoin) {
        let base_key = self.query_column.clone();
        self.joins.push(PlannedJoin { candidate, base_key });
    }

    pub fn candidates(&self) -> impl Iterator<Item = &CandidateJoin> {
        self.joins.iter().map(|j| &j.candidate)
    }

    /// Replays the plan on `base` against the lake.
    pub fn apply(&self, base: &Table, cat: &LakeCatalog) -> Result<Table> {
        let prepared = self
            .joins
            .iter()
            .map(|j| prepare_candidate(cat, &j.candidate, self.aggregation, &self.target).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        self.apply_prepared(base, &prepared)
    }

    /// Replays the plan with candidate tables already aggregated, aligned
    /// with `joins`.
    pub fn apply_prepared(&self, base: &Table, prepared: &[Arc<Table>]) -> Result<Table> {
        if prepared.len() != self.joins.len() {
            return Err(Error::InvalidParameter(
                "prepared tables do not align with the plan".into(),
            ));
        }
        let mut current = base.clone();
        for (j, right) in self.joins.iter().zip(prepared) {
            current = left_join(&current, right, &j.base_key, &j.candidate.column_name)?;
        }
        Ok(current)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{PLAN_HEADER}").unwrap();
        writeln!(s, "selector={}", self.selector).unwrap();
        writeln!(s, "aggregation={}", self.aggregation).unwrap();
        writeln!(s, "query_column={}", self.query_column).unwrap();
        writeln!(s, "target={}", self.target).unwrap();
        for j in &self.joins {
            let c = &j.candidate;
            let score = match c.score {
                Score::Containment(x) => format!("{x}"),
                Score::Unranked => "unranked".to_string(),
            };
            writeln!(
                s,
                "candidate\t{}\t{}\t{}\t{}\t{}",
                c.rank, c.table_name, c.column_name, score, j.base_key
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<MergePlan> {
        let err = |line: usize, message: String| Error::PlanFormat { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == PLAN_HEADER => {}
            _ => return Err(err(1, format!("expected `{PLAN_HEADER}`"))),
        }
        let mut selector = None;
        let mut aggregation = None;
        let mut query_column = None;
        let mut target = None;
        let mut joins = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("candidate\t") {
                let f: Vec<&str> = rest.split('\t').collect();
                if f.len() != 5 {
                    return Err(err(n, format!("candidate line has {} fields, expected 6", f.len() + 1)));
                }
                let rank = f[0]
                    .parse::<usize>()
                    .map_err(|_| err(n, format!("bad rank `{}`", f[0])))?;
                let score = if f[3] == "unranked" {
                    Score::Unranked
                } else {
                    Score::Containment(
                        f[3].parse::<f64>()
                            .map_err(|_| err(n, format!("bad score `{}`", f[3])))?,
                    )
                };
                joins.push(PlannedJoin {
                    candidate: CandidateJoin {
                        table_name: f[1].to_string(),
                        column_name: f[2].to_string(),
                        score,
                        rank,
                    },
                    base_key: f[4].to_string(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(n, format!("unrecognized line `{line}`")))?;
            match key {
                "selector" => {
                    selector = Some(value.parse::<SelectorKind>().map_err(|e| err(n, e.to_string()))?)
                }
                "aggregation" => {
                    aggregation =
                        Some(value.parse::<AggregationPolicy>().map_err(|e| err(n, e.to_string()))?)
                }
                "query_column" => query_column = Some(value.to_string()),
                "target" => target = Some(value.to_string()),
                other => return Err(err(n, format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| err(0, format!("missing `{k}`"));
        Ok(MergePlan {
            selector: selector.ok_or_else(|| missing("selector"))?,
            aggregation: aggregation.ok_or_else(|| missing("aggregation"))?,
            query_column: query_column.ok_or_else(|| missing("query_column"))?,
            target: target.ok_or_else(|| missing("target"))?,
            joins,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<MergePlan> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MergePlan::parse(&text)
    }
}
