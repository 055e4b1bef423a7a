use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::merge::{AggregationPolicy, SelectorKind};
use crate::retrieval::RetrievalMethod;

use super::experiment::EvalRecord;

/// The configuration every ablation is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceConfig {
    pub retrieval: RetrievalMethod,
    pub selector: SelectorKind,
    pub aggregation: AggregationPolicy,
    pub predictor: &'static str,
}

impl ReferenceConfig {
    pub const DEFAULT: ReferenceConfig = ReferenceConfig {
        retrieval: RetrievalMethod::Exact,
        selector: SelectorKind::BestSingle,
        aggregation: AggregationPolicy::Any,
        predictor: "gbdt",
    };

    pub fn from_name(name: &str) -> Result<ReferenceConfig> {
        match name {
            "default" | "reference" => Ok(ReferenceConfig::DEFAULT),
            other => Err(Error::InvalidParameter(format!("unknown reference `{other}`"))),
        }
    }

    fn value(&self, dim: Dimension) -> String {
        match dim {
            Dimension::Retrieval => self.retrieval.to_string(),
            Dimension::Selector => self.selector.to_string(),
            Dimension::Aggregation => self.aggregation.to_string(),
            Dimension::Predictor => self.predictor.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    Retrieval,
    Selector,
    Aggregation,
    Predictor,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Retrieval,
        Dimension::Selector,
        Dimension::Aggregation,
        Dimension::Predictor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Retrieval => "retrieval",
            Dimension::Selector => "selector",
            Dimension::Aggregation => "aggregation",
            Dimension::Predictor => "predictor",
        }
    }

    fn of(self, r: &EvalRecord) -> &str {
        match self {
            Dimension::Retrieval => &r.retrieval,
            Dimension::Selector => &r.selector,
            Dimension::Aggregation => &r.aggregation,
            Dimension::Predictor => &r.predictor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub dimension: Dimension,
    pub value: String,
    pub n_pairs: usize,
    /// Median of `100 * (variant - reference)` over paired folds.
    pub median_diff_pct: f64,
    /// Median of `variant time / reference time` over paired folds.
    pub median_time_ratio: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn matches_reference_except(r: &EvalRecord, reference: &ReferenceConfig, dim: Dimension) -> bool {
    Dimension::ALL
        .iter()
        .filter(|&&d| d != dim)
        .all(|&d| d.of(r) == reference.value(d))
}

type PairKey = (u64, usize, usize);

fn pair_key(r: &EvalRecord) -> PairKey {
    (r.seed, r.fold, r.top_k)
}

/// Fold-vs-fold comparison of each one-dimension variant against the
/// reference. The reference value of each dimension appears as a
/// self-comparison row.
pub fn ablation_report(records: &[EvalRecord], reference: &ReferenceConfig) -> Result<Vec<AblationRow>> {
    let is_ref = |r: &EvalRecord| Dimension::ALL.iter().all(|&d| d.of(r) == reference.value(d));
    let refs: HashMap<PairKey, &EvalRecord> = records
        .iter()
        .filter(|r| is_ref(r) && r.is_ok())
        .map(|r| (pair_key(r), r))
        .collect();
    if refs.is_empty() {
        return Err(Error::Report("no successful records for the reference configuration".into()));
    }
    let mut rows = Vec::new();
    for dim in Dimension::ALL {
        let mut by_value: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in records {
            if !r.is_ok() || !matches_reference_except(r, reference, dim) {
                continue;
            }
            let Some(base) = refs.get(&pair_key(r)) else {
                continue;
            };
            let e = by_value.entry(dim.of(r).to_string()).or_default();
            e.0.push(100.0 * (r.value - base.value));
            let (tv, tb) = (r.total_time(), base.total_time());
            e.1.push(if tv == tb { 1.0 } else { tv / tb });
        }
        for (value, (diffs, ratios)) in by_value {
            rows.push(AblationRow {
                dimension: dim,
                value,
                n_pairs: diffs.len(),
                median_diff_pct: median(&diffs),
                median_time_ratio: median(&ratios),
            });
        }
    }
    if !rows.iter().any(|r| r.value != reference.value(r.dimension)) {
        return Err(Error::Report("no variant records pair with the reference".into()));
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("dimension,value,n_pairs,median_diff_pct,median_time_ratio\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.4},{:.4}",
            r.dimension.as_str(),
            r.value,
            r.n_pairs,
            r.median_diff_pct,
            r.median_time_ratio
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoRow {
    pub config_id: String,
    pub n_records: usize,
    pub mean_metric: f64,
    pub mean_time: f64,
    pub peak_bytes: usize,
    pub frontier_time: bool,
    pub frontier_bytes: bool,
}

/// `flags[i]` is true when no other point has a metric at least as high and
/// a cost at least as low, with one of the two strict.
pub fn non_dominated(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(m, c)| {
            m.is_finite()
                && !points.iter().any(|&(m2, c2)| {
                    m2.is_finite() && m2 >= m && c2 <= c && (m2 > m || c2 < c)
                })
        })
        .collect()
}

/// One row per configuration, in first-appearance order.
pub fn pareto_report(records: &[EvalRecord]) -> Vec<ParetoRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&EvalRecord>> = HashMap::new();
    for r in records {
        let g = groups.entry(&r.config_id).or_default();
        if g.is_empty() {
            order.push(&r.config_id);
        }
        g.push(r);
    }
    let mut rows: Vec<ParetoRow> = order
        .iter()
        .map(|id| {
            let g = &groups[id];
            let ok: Vec<&&EvalRecord> = g.iter().filter(|r| r.is_ok()).collect();
            let mean = |f: &dyn Fn(&EvalRecord) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            ParetoRow {
                config_id: id.to_string(),
                n_records: g.len(),
                mean_metric: mean(&|r| r.value),
                mean_time: mean(&|r| r.total_time()),
                peak_bytes: g.iter().map(|r| r.peak_bytes).max().unwrap_or(0),
                frontier_time: false,
                frontier_bytes: false,
            }
        })
        .collect();
    let by_time = non_dominated(&rows.iter().map(|r| (r.mean_metric, r.mean_time)).collect::<Vec<_>>());
    let by_bytes = non_dominated(
        &rows
            .iter()
            .map(|r| (r.mean_metric, r.peak_bytes as f64))
            .collect::<Vec<_>>(),
    );
    for (i, r) in rows.iter_mut().enumerate() {
        r.frontier_time = by_time[i];
        r.frontier_bytes = by_bytes[i];
    }
    rows
}

pub fn pareto_csv(rows: &[ParetoRow]) -> String {
    let mut s = String::from(
        "config_id,n_records,mean_metric,mean_time_s,peak_bytes,frontier_time,frontier_bytes\n",
    );
    for r in rows {
        writeln!(
            s,
            "{},{},{:.6},{:.6},{},{},{}",
            r.config_id, r.n_records, r.mean_metric, r.mean_time, r.peak_bytes, r.frontier_time, r.frontier_bytes
        )
        .unwrap();
    }
    s
}

/// Mean metric and maximum peak bytes per `top_k`, ascending.
pub fn topk_curve(records: &[EvalRecord]) -> Vec<(usize, f64, usize)> {
    let mut by_k: BTreeMap<usize, (f64, usize, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let e = by_k.entry(r.top_k).or_insert((0.0, 0, 0));
        e.0 += r.value;
        e.1 += 1;
        e.2 = e.2.max(r.peak_bytes);
    }
    by_k.into_iter()
        .map(|(k, (s, n, b))| (k, s / n as f64, b))
        .collect()
}

pub fn write_report(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(retrieval: &str, selector: &str, seed: u64, fold: usize, value: f64, time: f64) -> EvalRecord {
        EvalRecord {
            config_id: format!("{retrieval}|{selector}|any|gbdt|k30"),
            retrieval: retrieval.into(),
            selector: selector.into(),
            aggregation: "any".into(),
            predictor: "gbdt".into(),
            top_k: 30,
            seed,
            fold,
            metric: "r2".into(),
            value,
            status: "ok".into(),
            retrieval_s: 0.0,
            prepare_s: 0.0,
            train_join_s: 0.0,
            train_model_s: time,
            predict_join_s: 0.0,
            predict_model_s: 0.0,
            peak_bytes: 100,
            n_candidates: 3,
            n_selected: 1,
            mean_containment: 0.5,
        }
    }

    #[test]
    fn self_comparison_is_zero_and_one() {
        let mut rs = Vec::new();
        for f in 0..5 {
            rs.push(rec("exact", "best_single", 0, f, 0.5 + f as f64 * 0.01, 2.0));
            rs.push(rec("minhash", "best_single", 0, f, 0.4 + f as f64 * 0.01, 1.0));
        }
        let rows = ablation_report(&rs, &ReferenceConfig::DEFAULT).unwrap();
        let own = rows
            .iter()
            .find(|r| r.dimension == Dimension::Retrieval && r.value == "exact")
            .unwrap();
        assert_eq!(own.median_diff_pct, 0.0);
        assert_eq!(own.median_time_ratio, 1.0);
        let mh = rows.iter().find(|r| r.value == "minhash").unwrap();
        assert!((mh.median_diff_pct + 10.0).abs() < 1e-9);
        assert!((mh.median_time_ratio - 0.5).abs() < 1e-12);
        assert_eq!(mh.n_pairs, 5);
    }

    #[test]
    fn missing_reference_is_an_error() {
        let rs = vec![rec("minhash", "best_single", 0, 0, 0.4, 1.0)];
        assert!(ablation_report(&rs, &ReferenceConfig::DEFAULT).is_err());
        let rs = vec![rec("exact", "best_single", 0, 0, 0.4, 1.0)];
        assert!(ablation_report(&rs, &ReferenceConfig::DEFAULT).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn dominance() {
        assert_eq!(non_dominated(&[(0.5, 1.0)]), vec![true]);
        assert_eq!(non_dominated(&[(0.9, 1.0), (0.5, 2.0)]), vec![true, false]);
        // staircase: two frontier points and one dominated
        let pts = [(0.9, 3.0), (0.6, 1.0), (0.5, 2.0)];
        let brute: Vec<bool> = pts
            .iter()
            .map(|&(m, c)| {
                !pts.iter()
                    .any(|&(m2, c2)| (m2, c2) != (m, c) && m2 >= m && c2 <= c)
            })
            .collect();
        assert_eq!(non_dominated(&pts), brute);
        assert_eq!(brute, vec![true, true, false]);
    }

    #[test]
    fn pareto_groups_by_config() {
        let mut rs = vec![
            rec("exact", "best_single", 0, 0, 0.9, 1.0),
            rec("exact", "best_single", 0, 1, 0.7, 3.0),
            rec("minhash", "best_single", 0, 0, 0.2, 5.0),
        ];
        rs[2].peak_bytes = 50;
        let rows = pareto_report(&rs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].n_records, 2);
        assert!((rows[0].mean_metric - 0.8).abs() < 1e-12);
        assert!(rows[0].frontier_time && !rows[1].frontier_time);
        assert!(rows[0].frontier_bytes && rows[1].frontier_bytes);
    }
}
