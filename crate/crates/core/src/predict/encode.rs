//! Feature encoding for linear models.
//!
//! Numeric columns become the mean-imputed value plus a missingness
//! indicator. Categorical columns with at most [`ONE_HOT_MAX_LEVELS`]
//! training levels are one-hot encoded with an extra null level; wider
//! ones are replaced by a smoothed per-level target mean.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Cell, DType, Table};

use super::Task;

pub const ONE_HOT_MAX_LEVELS: usize = 32;
pub const TARGET_SMOOTHING: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ColumnEncoder {
    Numeric {
        name: String,
        mean: f64,
    },
    OneHot {
        name: String,
        levels: Vec<String>,
    },
    TargetMean {
        name: String,
        means: BTreeMap<String, f64>,
        null_mean: Option<f64>,
        global: f64,
    },
}

impl ColumnEncoder {
    fn name(&self) -> &str {
        match self {
            ColumnEncoder::Numeric { name, .. }
            | ColumnEncoder::OneHot { name, .. }
            | ColumnEncoder::TargetMean { name, .. } => name,
        }
    }

    fn dtype(&self) -> DType {
        match self {
            ColumnEncoder::Numeric { .. } => DType::Numeric,
            _ => DType::Categorical,
        }
    }

    fn width(&self) -> usize {
        match self {
            ColumnEncoder::Numeric { .. } => 2,
            ColumnEncoder::OneHot { levels, .. } => levels.len() + 1,
            ColumnEncoder::TargetMean { .. } => 1,
        }
    }
}

/// Encoder state learned on a training table; replays identically on any
/// table carrying the same feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    columns: Vec<ColumnEncoder>,
}

fn smoothed(sum: f64, count: f64, global: f64) -> f64 {
    (sum + TARGET_SMOOTHING * global) / (count + TARGET_SMOOTHING)
}

impl Encoder {
    /// Learns the encoding of every column of `features` using the aligned
    /// training targets `y`.
    pub fn fit(features: &Table, y: &[f64]) -> Result<Encoder> {
        if features.n_rows() != y.len() {
            return Err(Error::InvalidParameter("features and targets differ in length".into()));
        }
        let global = if y.is_empty() {
            0.0
        } else {
            y.iter().sum::<f64>() / y.len() as f64
        };
        let columns = features
            .columns()
            .iter()
            .map(|col| match col.dtype() {
                DType::Numeric => {
                    let vals: Vec<f64> = col.cells().iter().filter_map(Cell::as_f64).collect();
                    let mean = if vals.is_empty() {
                        0.0
                    } else {
                        vals.iter().sum::<f64>() / vals.len() as f64
                    };
                    ColumnEncoder::Numeric {
                        name: col.name().to_string(),
                        mean,
                    }
                }
                DType::Categorical => {
                    let levels: BTreeSet<&str> = col.cells().iter().filter_map(Cell::as_str).collect();
                    if levels.len() <= ONE_HOT_MAX_LEVELS {
                        ColumnEncoder::OneHot {
                            name: col.name().to_string(),
                            levels: levels.into_iter().map(String::from).collect(),
                        }
                    } else {
                        let mut stats: HashMap<String, (f64, f64)> = HashMap::new();
                        let mut null_stats = (0.0, 0.0);
                        for (cell, &t) in col.cells().iter().zip(y) {
                            let s = match cell.as_str() {
                                Some(s) => stats.entry(s.to_string()).or_default(),
                                None => &mut null_stats,
                            };
                            s.0 += t;
                            s.1 += 1.0;
                        }
                        ColumnEncoder::TargetMean {
                            name: col.name().to_string(),
                            means: stats
                                .into_iter()
                                .map(|(k, (s, c))| (k, smoothed(s, c, global)))
                                .collect(),
                            null_mean: (null_stats.1 > 0.0)
                                .then(|| smoothed(null_stats.0, null_stats.1, global)),
                            global,
                        }
                    }
                }
            })
            .collect();
        Ok(Encoder { columns })
    }

    pub fn n_outputs(&self) -> usize {
        self.columns.iter().map(ColumnEncoder::width).sum()
    }

    /// `(name, dtype)` of the source columns, in encoding order.
    pub fn schema(&self) -> Vec<(String, DType)> {
        self.columns
            .iter()
            .map(|c| (c.name().to_string(), c.dtype()))
            .collect()
    }

    pub fn output_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_outputs());
        for c in &self.columns {
            match c {
                ColumnEncoder::Numeric { name, .. } => {
                    out.push(name.clone());
                    out.push(format!("{name}__missing"));
                }
                ColumnEncoder::OneHot { name, levels } => {
                    out.extend(levels.iter().map(|l| format!("{name}={l}")));
                    out.push(format!("{name}=<null>"));
                }
                ColumnEncoder::TargetMean { name, .. } => out.push(format!("{name}__target_mean")),
            }
        }
        out
    }

    pub fn transform(&self, table: &Table) -> Result<DMatrix<f64>> {
        let n = table.n_rows();
        let mut x = DMatrix::<f64>::zeros(n, self.n_outputs());
        let mut j = 0;
        for enc in &self.columns {
            let col = table.require_column(enc.name())?;
            if col.dtype() != enc.dtype() {
                return Err(Error::SchemaMismatch(format!(
                    "column `{}` is {} but was {} at fit time",
                    enc.name(),
                    col.dtype(),
                    enc.dtype()
                )));
            }
            match enc {
                ColumnEncoder::Numeric { mean, .. } => {
                    for (i, cell) in col.cells().iter().enumerate() {
                        match cell.as_f64() {
                            Some(v) => x[(i, j)] = v,
                            None => {
                                x[(i, j)] = *mean;
                                x[(i, j + 1)] = 1.0;
                            }
                        }
                    }
                }
                ColumnEncoder::OneHot { levels, .. } => {
                    for (i, cell) in col.cells().iter().enumerate() {
                        match cell.as_str() {
                            Some(s) => {
                                if let Ok(p) = levels.binary_search_by(|l| l.as_str().cmp(s)) {
                                    x[(i, j + p)] = 1.0;
                                }
                            }
                            None => x[(i, j + levels.len())] = 1.0,
                        }
                    }
                }
                ColumnEncoder::TargetMean {
                    means,
                    null_mean,
                    global,
                    ..
                } => {
                    for (i, cell) in col.cells().iter().enumerate() {
                        x[(i, j)] = match cell.as_str() {
                            Some(s) => means.get(s).copied().unwrap_or(*global),
                            None => null_mean.unwrap_or(*global),
                        };
                    }
                }
            }
            j += enc.width();
        }
        Ok(x)
    }
}

/// Encodes every non-target column of `table` for a linear model, learning
/// the encoder on this same table. Rows with a null target are dropped.
pub fn encode_features(
    table: &Table,
    target: &str,
    task: Task,
) -> Result<(DMatrix<f64>, Vec<f64>, Encoder)> {
    let (rows, y) = super::training_targets(table, target, task)?;
    let features = table.drop_columns(&[target]).take(&rows);
    let enc = Encoder::fit(&features, &y)?;
    let x = enc.transform(&features)?;
    Ok((x, y, enc))
}
