//! Joinable-column retrieval.
//!
//! Three strategies share the same output type: exact containment over the
//! whole lake, an LSH Ensemble index that returns an unranked pool of
//! columns above a containment threshold, and a hybrid that re-scores the
//! LSH pool exactly.

mod lsh;
mod minhash;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::LakeCatalog;
use crate::error::{Error, Result};
use crate::table::{distinct_values, KeySet, Table};

pub use lsh::{LshEnsembleIndex, LshParams, INDEX_FORMAT_VERSION, INDEX_MAGIC};
pub use minhash::{MinHashSketch, MinHasher, MERSENNE_61};

pub const DEFAULT_TOP_K: usize = 30;
pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RetrievalMethod {
    Exact,
    MinHash,
    Hybrid,
}

impl RetrievalMethod {
    pub const ALL: [RetrievalMethod; 3] = [
        RetrievalMethod::Exact,
        RetrievalMethod::MinHash,
        RetrievalMethod::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMethod::Exact => "exact",
            RetrievalMethod::MinHash => "minhash",
            RetrievalMethod::Hybrid => "hybrid",
        }
    }

    pub fn needs_index(self) -> bool {
        !matches!(self, RetrievalMethod::Exact)
    }
}

impl fmt::Display for RetrievalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetrievalMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(RetrievalMethod::Exact),
            "minhash" => Ok(RetrievalMethod::MinHash),
            "hybrid" => Ok(RetrievalMethod::Hybrid),
            other => Err(Error::InvalidParameter(format!(
                "unknown retrieval method `{other}`"
            ))),
        }
    }
}

/// How equal-score candidates are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    /// Ascending `(table, column)`.
    #[default]
    Lexicographic,
    /// Random order among ties, reproducible from the seed.
    Seeded(u64),
}

/// A retrieval request against a lake.
#[derive(Debug, Clone)]
pub struct QuerySpec<'a> {
    pub base_table: &'a Table,
    pub query_column: String,
    pub top_k: usize,
    pub method: RetrievalMethod,
    pub threshold: f64,
    pub tie_break: TieBreak,
}

impl<'a> QuerySpec<'a> {
    pub fn new(
        base_table: &'a Table,
        query_column: impl Into<String>,
        method: RetrievalMethod,
    ) -> Result<QuerySpec<'a>> {
        let query_column = query_column.into();
        base_table.require_column(&query_column)?;
        Ok(QuerySpec {
            base_table,
            query_column,
            top_k: DEFAULT_TOP_K,
            method,
            threshold: DEFAULT_THRESHOLD,
            tie_break: TieBreak::Lexicographic,
        })
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k;
        self
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        self.threshold = t;
        self
    }

    pub fn with_tie_break(mut self, t: TieBreak) -> Self {
        self.tie_break = t;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidParameter("top_k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParameter(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Distinct non-null keys of the query column.
    pub fn query_keys(&self) -> Result<KeySet> {
        let keys = distinct_values(self.base_table.require_column(&self.query_column)?);
        if keys.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(keys)
    }
}

/// Retrieval score: exact containment, or none for the LSH pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Score {
    Containment(f64),
    Unranked,
}

impl Score {
    pub fn value(self) -> Option<f64> {
        match self {
            Score::Containment(c) => Some(c),
            Score::Unranked => None,
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Containment(c) => write!(f, "{c}"),
            Score::Unranked => f.write_str("unranked"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateJoin {
    pub table_name: String,
    pub column_name: String,
    pub score: Score,
    /// 1-based position in the result list.
    pub rank: usize,
}

/// Jaccard containment `|Q ∩ C| / |Q|`.
pub fn containment(query: &KeySet, candidate: &KeySet) -> Result<f64> {
    if query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let (small, large) = if query.len() <= candidate.len() {
        (query, candidate)
    } else {
        (candidate, query)
    };
    let inter = small.iter().filter(|k| large.contains(*k)).count();
    Ok(inter as f64 / query.len() as f64)
}

/// Sorts `(table, column, score)` by score descending with the requested
/// tie-break, truncates to `top_k` and assigns ranks.
pub(crate) fn rank_scored(
    mut scored: Vec<(String, String, f64)>,
    top_k: usize,
    tie_break: TieBreak,
) -> Vec<CandidateJoin> {
    match tie_break {
        TieBreak::Lexicographic => {
            scored.sort_by(|a, b| {
                b.2.total_cmp(&a.2)
                    .then_with(|| a.0.cmp(&b.0))
                    .then_with(|| a.1.cmp(&b.1))
            });
        }
        TieBreak::Seeded(seed) => {
            scored.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            scored.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            scored.sort_by(|a, b| b.2.total_cmp(&a.2));
        }
    }
    scored
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(i, (t, c, s))| CandidateJoin {
            table_name: t,
            column_name: c,
            score: Score::Containment(s),
            rank: i + 1,
        })
        .collect()
}

/// Exact containment of the query set against every lake column.
/// Zero-score columns are excluded.
pub fn exact_match(q: &QuerySpec<'_>, cat: &LakeCatalog) -> Result<Vec<CandidateJoin>> {
    q.validate()?;
    let query = q.query_keys()?;
    exact_match_keys(&query, q.top_k, q.tie_break, cat)
}

pub(crate) fn exact_match_keys(
    query: &KeySet,
    top_k: usize,
    tie_break: TieBreak,
    cat: &LakeCatalog,
) -> Result<Vec<CandidateJoin>> {
    let jobs: Vec<(usize, usize)> = cat
        .tables()
        .iter()
        .enumerate()
        .flat_map(|(t, lt)| (0..lt.keys.len()).map(move |c| (t, c)))
        .collect();
    let scored: Vec<(String, String, f64)> = jobs
        .par_iter()
        .filter_map(|&(t, c)| {
            let lt = &cat.tables()[t];
            let s = containment(query, &lt.keys[c]).ok()?;
            (s > 0.0).then(|| {
                (
                    lt.table.name().to_string(),
                    lt.table.columns()[c].name().to_string(),
                    s,
                )
            })
        })
        .collect();
    Ok(rank_scored(scored, top_k, tie_break))
}

/// LSH Ensemble lookup; the result is unranked and truncated to `top_k` in
/// index insertion order.
pub fn minhash_query(index: &LshEnsembleIndex, q: &QuerySpec<'_>) -> Result<Vec<CandidateJoin>> {
    q.validate()?;
    let pool = minhash_pool(index, q)?;
    Ok(pool
        .into_iter()
        .take(q.top_k)
        .enumerate()
        .map(|(i, (t, c))| CandidateJoin {
            table_name: t,
            column_name: c,
            score: Score::Unranked,
            rank: i + 1,
        })
        .collect())
}

/// Full, untruncated LSH pool as `(table, column)` in insertion order.
pub fn minhash_pool(index: &LshEnsembleIndex, q: &QuerySpec<'_>) -> Result<Vec<(String, String)>> {
    let query = q.query_keys()?;
    let sketch = index.hasher().sketch(&query);
    let ids = index.query_sketch(&sketch, q.threshold)?;
    Ok(ids
        .into_iter()
        .map(|id| {
            let p = index.posting(id);
            (p.table_name.clone(), p.column_name.clone())
        })
        .collect())
}

/// LSH pool re-ranked by exact containment.
pub fn hybrid_query(
    index: &LshEnsembleIndex,
    q: &QuerySpec<'_>,
    cat: &LakeCatalog,
) -> Result<Vec<CandidateJoin>> {
    q.validate()?;
    let query = q.query_keys()?;
    let pool = minhash_pool(index, q)?;
    let mut scored = Vec::with_capacity(pool.len());
    for (t, c) in pool {
        let keys = cat.column_keys(&t, &c)?;
        let s = containment(&query, keys)?;
        if s > 0.0 {
            scored.push((t, c, s));
        }
    }
    Ok(rank_scored(scored, q.top_k, q.tie_break))
}

/// Dispatches on `q.method`. `index` is required for MinHash and Hybrid.
pub fn retrieve(
    q: &QuerySpec<'_>,
    cat: &LakeCatalog,
    index: Option<&LshEnsembleIndex>,
) -> Result<Vec<CandidateJoin>> {
    let need = || Error::InvalidParameter(format!("{} retrieval requires an index", q.method));
    match q.method {
        RetrievalMethod::Exact => exact_match(q, cat),
        RetrievalMethod::MinHash => minhash_query(index.ok_or_else(need)?, q),
        RetrievalMethod::Hybrid => hybrid_query(index.ok_or_else(need)?, q, cat),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;
    use proptest::prelude::*;

    fn keys(v: &[&str]) -> KeySet {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn containment_examples() {
        let q = keys(&["a", "b", "c", "d"]);
        assert_eq!(containment(&q, &q).unwrap(), 1.0);
        assert_eq!(containment(&q, &keys(&["x", "y"])).unwrap(), 0.0);
        // Q ∩ C = {b, c}: 2 of 4.
        assert_eq!(containment(&q, &keys(&["b", "c", "x"])).unwrap(), 0.5);
        assert!(matches!(
            containment(&KeySet::default(), &q),
            Err(Error::EmptyQuery)
        ));
    }

    fn key_table(name: &str, col: &str, vals: &[&str]) -> Table {
        Table::new(name, vec![Column::categorical(col, vals.iter().map(|v| Some(*v)))]).unwrap()
    }

    #[test]
    fn exact_match_ranks_and_excludes_zero() {
        let base = key_table("base", "k", &["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let lake = LakeCatalog::from_tables(vec![
            key_table("t30", "k", &["a", "b", "c", "x"]),
            key_table("t100", "k", &["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]),
            key_table("t60", "k", &["a", "b", "c", "d", "e", "f"]),
            key_table("none", "k", &["zz"]),
        ])
        .unwrap();
        let q = QuerySpec::new(&base, "k", RetrievalMethod::Exact).unwrap().with_top_k(2);
        let res = exact_match(&q, &lake).unwrap();
        assert_eq!(res.len(), 2);
        assert_eq!(res[0].table_name, "t100");
        assert_eq!(res[0].score, Score::Containment(1.0));
        assert_eq!(res[1].table_name, "t60");
        assert_eq!(res[1].score, Score::Containment(0.6));
        assert_eq!((res[0].rank, res[1].rank), (1, 2));

        let q = QuerySpec::new(&base, "k", RetrievalMethod::Exact).unwrap();
        let all = exact_match(&q, &lake).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|c| c.table_name != "none"));
    }

    #[test]
    fn disjoint_lake_gives_empty_result() {
        let base = key_table("base", "k", &["a"]);
        let lake = LakeCatalog::from_tables(vec![key_table("t", "k", &["b"])]).unwrap();
        let q = QuerySpec::new(&base, "k", RetrievalMethod::Exact).unwrap();
        assert!(exact_match(&q, &lake).unwrap().is_empty());
    }

    #[test]
    fn ties_break_lexicographically() {
        let base = key_table("base", "k", &["a"]);
        let lake = LakeCatalog::from_tables(vec![
            key_table("b", "k", &["a"]),
            key_table("a", "z", &["a"]),
            key_table("a", "y", &["a"]).with_name("a2"),
        ])
        .unwrap();
        let q = QuerySpec::new(&base, "k", RetrievalMethod::Exact).unwrap();
        let names: Vec<_> = exact_match(&q, &lake)
            .unwrap()
            .into_iter()
            .map(|c| c.table_name)
            .collect();
        assert_eq!(names, vec!["a", "a2", "b"]);
        let seeded = q.clone().with_tie_break(TieBreak::Seeded(3));
        let r1 = exact_match(&seeded, &lake).unwrap();
        let r2 = exact_match(&seeded, &lake).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn empty_query_column_errors() {
        let base = Table::new("b", vec![Column::categorical::<_, String>("k", [None])]).unwrap();
        let lake = LakeCatalog::from_tables(vec![]).unwrap();
        let q = QuerySpec::new(&base, "k", RetrievalMethod::Exact).unwrap();
        assert!(matches!(exact_match(&q, &lake), Err(Error::EmptyQuery)));
        assert!(QuerySpec::new(&base, "nope", RetrievalMethod::Exact).is_err());
    }

    fn small_set() -> impl Strategy<Value = KeySet> {
        prop::collection::hash_set(0u8..40, 0..30)
            .prop_map(|s| s.into_iter().map(|x| x.to_string()).collect())
    }

    proptest! {
        #[test]
        fn containment_properties(q in small_set(), c in small_set(), extra in small_set()) {
            prop_assume!(!q.is_empty());
            let s = containment(&q, &c).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(containment(&q, &q).unwrap(), 1.0);
            let sup: KeySet = c.union(&extra).cloned().collect();
            prop_assert!(s <= containment(&q, &sup).unwrap());
        }
    }
}
