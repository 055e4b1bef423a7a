//! Experiment matrix files.
//!
//! ```text
//! # comments start with '#'
//! lake = lake/
//! base_table = base.csv
//! query_column = company
//! target = revenue
//! task = auto                      # auto | regression | classification
//! retrieval = exact, minhash       # exact | minhash | hybrid
//! selector = best_single, full_join
//! aggregation = any, mean          # any | mean | dfs
//! predictor = gbdt, ridge
//! top_k = 30
//! seeds = 0, 1, 2
//! n_folds = 5
//! threshold = 0.2
//! num_perm = 256
//! partitions = 8
//! max_iter = 30
//! deplete = true
//! ```
//!
//! List-valued keys expand into the cartesian product. Relative paths are
//! resolved against the file's directory.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::merge::{AggregationPolicy, SelectorKind};
use crate::predict::Task;
use crate::retrieval::RetrievalMethod;

use super::experiment::ExperimentConfig;

fn list<T: FromStr>(line: usize, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let out = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>().map_err(|e| Error::Config {
                line,
                message: format!("`{s}`: {e}"),
            })
        })
        .collect::<Result<Vec<T>>>()?;
    if out.is_empty() {
        return Err(Error::Config {
            line,
            message: "empty list".into(),
        });
    }
    Ok(out)
}

fn one<T: FromStr>(line: usize, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::Config {
        line,
        message: format!("`{v}`: {e}"),
    })
}

/// Parses a matrix file. `base_dir` anchors relative paths.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<Vec<ExperimentConfig>> {
    let mut proto = ExperimentConfig::new("", "");
    let mut lake = None;
    let mut base = None;
    let mut query = None;
    let mut target = None;
    let mut retrievals = vec![RetrievalMethod::Exact];
    let mut selectors = vec![SelectorKind::BestSingle];
    let mut aggregations = vec![AggregationPolicy::Any];
    let mut predictors = vec!["gbdt".to_string()];
    let mut top_ks = vec![proto.top_k];
    let mut seeds = vec![0u64];

    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: n,
            message: format!("expected key = value, got `{line}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "lake" => lake = Some(base_dir.join(v)),
            "base_table" => base = Some(base_dir.join(v)),
            "query_column" => query = Some(v.to_string()),
            "target" => target = Some(v.to_string()),
            "task" => {
                proto.task = match v {
                    "auto" => None,
                    other => Some(one::<Task>(n, other)?),
                }
            }
            "retrieval" => retrievals = list(n, v)?,
            "selector" => selectors = list(n, v)?,
            "aggregation" => aggregations = list(n, v)?,
            "predictor" => {
                predictors = list::<String>(n, v)?;
                for p in &predictors {
                    if p != "gbdt" && p != "ridge" {
                        return Err(Error::Config {
                            line: n,
                            message: format!("unknown predictor `{p}`"),
                        });
                    }
                }
            }
            "top_k" => top_ks = list(n, v)?,
            "seed" | "seeds" => seeds = list(n, v)?,
            "n_folds" => proto.n_folds = one(n, v)?,
            "threshold" => proto.threshold = one(n, v)?,
            "num_perm" => proto.num_perm = one(n, v)?,
            "partitions" => proto.num_partitions = one(n, v)?,
            "max_iter" => proto.max_iter = one(n, v)?,
            "deplete" => proto.deplete = one(n, v)?,
            other => {
                return Err(Error::Config {
                    line: n,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }
    let missing = |k: &str| Error::Config {
        line: 0,
        message: format!("missing required key `{k}`"),
    };
    proto.lake = lake.ok_or_else(|| missing("lake"))?;
    proto.base_table = base.ok_or_else(|| missing("base_table"))?;
    proto.query_column = query.ok_or_else(|| missing("query_column"))?;
    proto.target_column = target.ok_or_else(|| missing("target"))?;

    let mut out = Vec::new();
    for &r in &retrievals {
        for &s in &selectors {
            for &a in &aggregations {
                for p in &predictors {
                    for &k in &top_ks {
                        for &seed in &seeds {
                            let c = ExperimentConfig {
                                retrieval: r,
                                selector: s,
                                aggregation: a,
                                predictor: p.clone(),
                                top_k: k,
                                seed,
                                ..proto.clone()
                            };
                            c.validate().map_err(|e| Error::Config {
                                line: 0,
                                message: e.to_string(),
                            })?;
                            out.push(c);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}
