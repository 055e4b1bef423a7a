use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Column, DType, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregationPolicy {
    Any,
    Mean,
    Dfs,
}

impl AggregationPolicy {
    pub const ALL: [AggregationPolicy; 3] =
        [AggregationPolicy::Any, AggregationPolicy::Mean, AggregationPolicy::Dfs];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationPolicy::Any => "any",
            AggregationPolicy::Mean => "mean",
            AggregationPolicy::Dfs => "dfs",
        }
    }
}

impl fmt::Display for AggregationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "any" => Ok(AggregationPolicy::Any),
            "mean" => Ok(AggregationPolicy::Mean),
            "dfs" => Ok(AggregationPolicy::Dfs),
            other => Err(Error::InvalidParameter(format!("unknown aggregation `{other}`"))),
        }
    }
}

pub const DFS_NUMERIC_STATS: [&str; 6] = ["mean", "min", "max", "sum", "std", "count"];
pub const DFS_CATEGORICAL_STATS: [&str; 3] = ["mode", "nunique", "count"];

/// Row indices per distinct non-null key, groups in order of first
/// appearance.
pub fn group_rows(key: &Column) -> Vec<Vec<usize>> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (row, cell) in key.cells().iter().enumerate() {
        if let Some(k) = cell.canonical_key() {
            let g = *index.entry(k).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(row);
        }
    }
    groups
}

/// Collapses `candidate` to one row per distinct non-null `join_key` value.
pub fn aggregate(candidate: &Table, join_key: &str, policy: AggregationPolicy) -> Result<Table> {
    let key = candidate.require_column(join_key)?;
    let groups = group_rows(key);
    if groups.is_empty() {
        return Err(Error::Aggregation(format!(
            "join key `{join_key}` of `{}` has no non-null values",
            candidate.name()
        )));
    }
    if policy == AggregationPolicy::Any {
        let first: Vec<usize> = groups.iter().map(|g| g[0]).collect();
        return Ok(candidate.take(&first));
    }
    let first: Vec<usize> = groups.iter().map(|g| g[0]).collect();
    let per_column: Vec<Vec<Column>> = candidate
        .columns()
        .par_iter()
        .map(|col| {
            if col.name() == join_key {
                return vec![col.take(&first)];
            }
            match policy {
                AggregationPolicy::Mean => vec![mean_column(col, &groups)],
                AggregationPolicy::Dfs => dfs_columns(col, &groups),
                AggregationPolicy::Any => unreachable!(),
            }
        })
        .collect();

    let mut used: HashSet<String> = HashSet::new();
    let mut columns = Vec::new();
    for col in per_column.into_iter().flatten() {
        let name = unique_name(col.name(), &used);
        used.insert(name.clone());
        columns.push(if name == col.name() { col } else { col.renamed(name) });
    }
    Table::new(candidate.name(), columns)
}

/// Any with a uniformly random representative row per group.
pub fn aggregate_any_seeded(candidate: &Table, join_key: &str, seed: u64) -> Result<Table> {
    let key = candidate.require_column(join_key)?;
    let groups = group_rows(key);
    if groups.is_empty() {
        return Err(Error::Aggregation(format!(
            "join key `{join_key}` of `{}` has no non-null values",
            candidate.name()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = groups.iter().map(|g| g[rng.gen_range(0..g.len())]).collect();
    Ok(candidate.take(&rows))
}

fn unique_name(name: &str, used: &HashSet<String>) -> String {
    if !used.contains(name) {
        return name.to_string();
    }
    (2..)
        .map(|i| format!("{name}_{i}"))
        .find(|n| !used.contains(n))
        .unwrap()
}

fn values(col: &Column, rows: &[usize]) -> Vec<f64> {
    rows.iter().filter_map(|&r| col.cells()[r].as_f64()).collect()
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

fn mode<'a>(col: &'a Column, rows: &[usize]) -> Option<&'a str> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for &r in rows {
        if let Some(s) = col.cells()[r].as_str() {
            *counts.entry(s).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|(a, ca), (b, cb)| ca.cmp(cb).then_with(|| b.cmp(a)))
        .map(|(s, _)| s)
}

fn numeric(name: String, xs: impl Iterator<Item = Option<f64>>) -> Column {
    Column::numeric(name, xs)
}

fn mean_column(col: &Column, groups: &[Vec<usize>]) -> Column {
    match col.dtype() {
        DType::Numeric => numeric(
            col.name().to_string(),
            groups.iter().map(|g| mean(&values(col, g))),
        ),
        DType::Categorical => Column::categorical(
            col.name(),
            groups.iter().map(|g| mode(col, g)),
        ),
    }
}

fn dfs_columns(col: &Column, groups: &[Vec<usize>]) -> Vec<Column> {
    let name = |stat: &str| format!("{}__{stat}", col.name());
    match col.dtype() {
        DType::Numeric => {
            let vals: Vec<Vec<f64>> = groups.iter().map(|g| values(col, g)).collect();
            let stat = |f: &dyn Fn(&[f64]) -> Option<f64>| -> Vec<Option<f64>> {
                vals.iter().map(|v| f(v)).collect()
            };
            vec![
                numeric(name("mean"), stat(&mean).into_iter()),
                numeric(
                    name("min"),
                    stat(&|v| v.iter().copied().reduce(f64::min)).into_iter(),
                ),
                numeric(
                    name("max"),
                    stat(&|v| v.iter().copied().reduce(f64::max)).into_iter(),
                ),
                numeric(
                    name("sum"),
                    stat(&|v| (!v.is_empty()).then(|| v.iter().sum())).into_iter(),
                ),
                numeric(name("std"), stat(&sample_std).into_iter()),
                numeric(name("count"), stat(&|v| Some(v.len() as f64)).into_iter()),
            ]
        }
        DType::Categorical => {
            let nunique = groups.iter().map(|g| {
                let s: HashSet<&str> = g.iter().filter_map(|&r| col.cells()[r].as_str()).collect();
                Some(s.len() as f64)
            });
            let count = groups
                .iter()
                .map(|g| Some(g.iter().filter(|&&r| !col.cells()[r].is_null()).count() as f64));
            vec![
                Column::categorical(name("mode"), groups.iter().map(|g| mode(col, g))),
                numeric(name("nunique"), nunique),
                numeric(name("count"), count),
            ]
        }
    }
}

/// Number of columns DFS derives from one source column.
pub fn dfs_arity(dtype: DType) -> usize {
    match dtype {
        DType::Numeric => DFS_NUMERIC_STATS.len(),
        DType::Categorical => DFS_CATEGORICAL_STATS.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Cell;

    fn movies() -> Table {
        Table::new(
            "ratings",
            vec![
                Column::categorical("title", ["t1", "t1", "t2"].map(Some)),
                Column::numeric("rating", [4.0, 2.0, 5.0].map(Some)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn mean_of_groups() {
        let out = aggregate(&movies(), "title", AggregationPolicy::Mean).unwrap();
        assert_eq!(out.n_rows(), 2);
        assert_eq!(
            out.column("rating").unwrap().cells(),
            &[Cell::Number(3.0), Cell::Number(5.0)]
        );
    }

    #[test]
    fn any_takes_first_row() {
        let out = aggregate(&movies(), "title", AggregationPolicy::Any).unwrap();
        assert_eq!(
            out.column("rating").unwrap().cells(),
            &[Cell::Number(4.0), Cell::Number(5.0)]
        );
    }

    #[test]
    fn unique_keys_any_is_identity() {
        let t = Table::new(
            "u",
            vec![
                Column::categorical("k", ["a", "b", "c"].map(Some)),
                Column::numeric("v", [Some(1.0), None, Some(3.0)]),
            ],
        )
        .unwrap();
        assert_eq!(aggregate(&t, "k", AggregationPolicy::Any).unwrap(), t);
    }

    #[test]
    fn dfs_numeric_expands_to_six() {
        let out = aggregate(&movies(), "title", AggregationPolicy::Dfs).unwrap();
        assert_eq!(out.n_cols(), 7);
        assert_eq!(
            out.column_names(),
            vec![
                "title",
                "rating__mean",
                "rating__min",
                "rating__max",
                "rating__sum",
                "rating__std",
                "rating__count"
            ]
        );
        let c = |n: &str| out.column(n).unwrap().cells().to_vec();
        assert_eq!(c("rating__count"), vec![Cell::Number(2.0), Cell::Number(1.0)]);
        assert_eq!(c("rating__sum"), vec![Cell::Number(6.0), Cell::Number(5.0)]);
        assert_eq!(c("rating__std")[1], Cell::Null);
        let expected = 2f64.sqrt();
        assert!((c("rating__std")[0].as_f64().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn dfs_categorical_expands_to_three() {
        let t = Table::new(
            "c",
            vec![
                Column::categorical("k", ["a", "a", "a", "b"].map(Some)),
                Column::categorical("g", [Some("y"), Some("x"), None, None]),
            ],
        )
        .unwrap();
        let out = aggregate(&t, "k", AggregationPolicy::Dfs).unwrap();
        assert_eq!(out.column_names(), vec!["k", "g__mode", "g__nunique", "g__count"]);
        assert_eq!(out.column("g__mode").unwrap().cells(), &[Cell::text("x"), Cell::Null]);
        assert_eq!(
            out.column("g__nunique").unwrap().cells(),
            &[Cell::Number(2.0), Cell::Number(0.0)]
        );
        assert_eq!(
            out.column("g__count").unwrap().cells(),
            &[Cell::Number(2.0), Cell::Number(0.0)]
        );
    }

    #[test]
    fn dfs_names_stay_unique() {
        let t = Table::new(
            "c",
            vec![
                Column::categorical("k", ["a"].map(Some)),
                Column::numeric("v", [Some(1.0)]),
                Column::numeric("v__mean", [Some(2.0)]),
            ],
        )
        .unwrap();
        let out = aggregate(&t, "k", AggregationPolicy::Dfs).unwrap();
        let names: HashSet<&str> = out.column_names().into_iter().collect();
        assert_eq!(names.len(), out.n_cols());
        assert_eq!(out.n_cols(), 13);
    }

    #[test]
    fn mode_tie_breaks_lexicographically() {
        let t = Table::new(
            "c",
            vec![
                Column::categorical("k", ["a", "a", "a", "a"].map(Some)),
                Column::categorical("g", ["z", "b", "z", "b"].map(Some)),
            ],
        )
        .unwrap();
        let out = aggregate(&t, "k", AggregationPolicy::Mean).unwrap();
        assert_eq!(out.column("g").unwrap().cells(), &[Cell::text("b")]);
    }

    #[test]
    fn all_null_key_errors() {
        let t = Table::new(
            "c",
            vec![Column::categorical("k", [None::<&str>, None])],
        )
        .unwrap();
        assert!(matches!(
            aggregate(&t, "k", AggregationPolicy::Any),
            Err(Error::Aggregation(_))
        ));
    }

    #[test]
    fn seeded_any_picks_group_members() {
        let t = movies();
        for seed in 0..10 {
            let out = aggregate_any_seeded(&t, "title", seed).unwrap();
            let r = out.column("rating").unwrap().cells()[0].as_f64().unwrap();
            assert!(r == 4.0 || r == 2.0);
            assert_eq!(out.column("rating").unwrap().cells()[1], Cell::Number(5.0));
        }
    }
}
