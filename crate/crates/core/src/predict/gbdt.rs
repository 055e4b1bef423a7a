//! Histogram gradient boosting with native missing values and categorical
//! splits.
//!
//! Features are binned once (at most 255 value bins plus a missing bin).
//! Numeric splits are thresholds on the bin order; categorical splits sort
//! the levels of the node by their gradient statistic `G / H` and split the
//! sorted order. Every split learns which side its missing rows go to.
//! Trees grow depth-first to `max_depth`; boosting stops after `patience`
//! rounds without improvement on a 10% holdout and is truncated to the best
//! round.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Cell, Column, DType, Table};

pub const MISSING_BIN: u8 = 255;
const MIN_HESSIAN: f64 = 1e-6;
const PARALLEL_WORK: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_iter: usize,
    pub early_stop_patience: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub l2: f64,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
    pub holdout_fraction: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_iter: 300,
            early_stop_patience: 10,
            learning_rate: 0.1,
            max_depth: 6,
            l2: 0.01,
            min_samples_leaf: 20,
            max_bins: 255,
            holdout_fraction: 0.1,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_iter == 0 || self.early_stop_patience == 0 || self.max_depth == 0 {
            return bad("n_iter, early_stop_patience and max_depth must be positive");
        }
        if self.early_stop_patience > self.n_iter {
            return bad("early_stop_patience must not exceed n_iter");
        }
        if !(self.learning_rate > 0.0) || !(self.l2 > 0.0) || self.min_samples_leaf == 0 {
            return bad("learning_rate, l2 and min_samples_leaf must be positive");
        }
        if !(2..=255).contains(&self.max_bins) {
            return bad("max_bins must be in [2, 255]");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Binner {
    Numeric { edges: Vec<f64> },
    Categorical { levels: BTreeMap<String, u8>, other: Option<u8>, n_bins: u8 },
}

impl Binner {
    fn fit(col: &Column, max_bins: usize) -> Binner {
        match col.dtype() {
            DType::Numeric => {
                let mut vals: Vec<f64> = col.cells().iter().filter_map(Cell::as_f64).collect();
                vals.sort_by(f64::total_cmp);
                let mut distinct = vals.clone();
                distinct.dedup();
                let edges = if distinct.len() <= max_bins {
                    distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
                } else {
                    let mut e: Vec<f64> = (1..max_bins)
                        .map(|i| vals[i * vals.len() / max_bins])
                        .collect();
                    e.dedup();
                    e
                };
                Binner::Numeric { edges }
            }
            DType::Categorical => {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for s in col.cells().iter().filter_map(Cell::as_str) {
                    *counts.entry(s).or_default() += 1;
                }
                let mut order: Vec<(&str, usize)> = counts.into_iter().collect();
                order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
                let keep = if order.len() <= max_bins { order.len() } else { max_bins - 1 };
                let levels: BTreeMap<String, u8> = order[..keep]
                    .iter()
                    .enumerate()
                    .map(|(i, (s, _))| (s.to_string(), i as u8))
                    .collect();
                let other = (keep < order.len()).then_some(keep as u8);
                let n_bins = (keep + other.is_some() as usize) as u8;
                Binner::Categorical { levels, other, n_bins }
            }
        }
    }

    fn n_bins(&self) -> usize {
        match self {
            Binner::Numeric { edges } => edges.len() + 1,
            Binner::Categorical { n_bins, .. } => *n_bins as usize,
        }
    }

    fn is_categorical(&self) -> bool {
        matches!(self, Binner::Categorical { .. })
    }

    fn bin(&self, cell: &Cell) -> u8 {
        match (self, cell) {
            (_, Cell::Null) => MISSING_BIN,
            (Binner::Numeric { edges }, Cell::Number(x)) => {
                edges.partition_point(|e| *e <= *x) as u8
            }
            (Binner::Categorical { levels, other, .. }, Cell::Text(s)) => levels
                .get(s.as_str())
                .copied()
                .or(*other)
                .unwrap_or(MISSING_BIN),
            _ => MISSING_BIN,
        }
    }

    fn bin_column(&self, col: &Column) -> Vec<u8> {
        col.cells().iter().map(|c| self.bin(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Rule {
    /// Bins `<= t` go left.
    Threshold(u8),
    /// Bit `b` set means bin `b` goes left.
    Subset([u64; 4]),
}

impl Rule {
    fn goes_left(&self, bin: u8, missing_left: bool) -> bool {
        if bin == MISSING_BIN {
            return missing_left;
        }
        match self {
            Rule::Threshold(t) => bin <= *t,
            Rule::Subset(bits) => bits[(bin >> 6) as usize] >> (bin & 63) & 1 == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: u32,
        rule: Rule,
        missing_left: bool,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, bins: &[Vec<u8>], row: usize) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    rule,
                    missing_left,
                    left,
                    right,
                } => {
                    let b = bins[*feature as usize][row];
                    i = if rule.goes_left(b, *missing_left) { *left } else { *right } as usize;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    features: Vec<String>,
    binners: Vec<Binner>,
    base_score: f64,
    trees: Vec<Tree>,
    logistic: bool,
    holdout_curve: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct Stat {
    g: f64,
    h: f64,
    n: usize,
}

impl Stat {
    fn add(&mut self, o: &Stat) {
        self.g += o.g;
        self.h += o.h;
        self.n += o.n;
    }

    fn sub(&self, o: &Stat) -> Stat {
        Stat {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }
}

struct Candidate {
    gain: f64,
    rule: Rule,
    missing_left: bool,
}

struct Grower<'a> {
    params: &'a GbdtParams,
    bins: &'a [Vec<u8>],
    binners: &'a [Binner],
    grad: &'a [f64],
    hess: &'a [f64],
}

impl<'a> Grower<'a> {
    fn score(&self, s: &Stat) -> f64 {
        s.g * s.g / (s.h + self.params.l2)
    }

    fn leaf(&self, s: &Stat) -> f64 {
        -s.g / (s.h + self.params.l2) * self.params.learning_rate
    }

    fn admissible(&self, l: &Stat, r: &Stat) -> bool {
        let m = self.params.min_samples_leaf;
        l.n >= m && r.n >= m && l.h >= MIN_HESSIAN && r.h >= MIN_HESSIAN
    }

    fn best_for_feature(&self, f: usize, rows: &[u32], total: &Stat) -> Option<Candidate> {
        let nb = self.binners[f].n_bins();
        let mut hist = vec![Stat::default(); nb];
        let mut missing = Stat::default();
        let col = &self.bins[f];
        for &r in rows {
            let r = r as usize;
            let b = col[r];
            let s = if b == MISSING_BIN { &mut missing } else { &mut hist[b as usize] };
            s.g += self.grad[r];
            s.h += self.hess[r];
            s.n += 1;
        }
        let order: Vec<usize> = if self.binners[f].is_categorical() {
            let mut o: Vec<usize> = (0..nb).filter(|&b| hist[b].n > 0).collect();
            o.sort_by(|&a, &b| {
                let ra = hist[a].g / (hist[a].h + self.params.l2);
                let rb = hist[b].g / (hist[b].h + self.params.l2);
                ra.total_cmp(&rb).then(a.cmp(&b))
            });
            o
        } else {
            (0..nb).collect()
        };

        let parent = self.score(total);
        let mut best: Option<Candidate> = None;
        let mut best_gain = 0.0;
        let mut left = Stat::default();
        let nonmissing = total.sub(&missing);
        for (pos, &b) in order.iter().enumerate() {
            left.add(&hist[b]);
            if hist[b].n == 0 {
                continue;
            }
            let right = nonmissing.sub(&left);
            for missing_left in [false, true] {
                if missing.n == 0 && missing_left {
                    continue;
                }
                let (l, r) = if missing_left {
                    let mut l = left;
                    l.add(&missing);
                    (l, right)
                } else {
                    let mut r = right;
                    r.add(&missing);
                    (left, r)
                };
                if !self.admissible(&l, &r) {
                    continue;
                }
                let gain = self.score(&l) + self.score(&r) - parent;
                if gain > best_gain {
                    best_gain = gain;
                    let rule = if self.binners[f].is_categorical() {
                        let mut bits = [0u64; 4];
                        for &lb in &order[..=pos] {
                            bits[lb >> 6] |= 1 << (lb & 63);
                        }
                        Rule::Subset(bits)
                    } else {
                        Rule::Threshold(b as u8)
                    };
                    best = Some(Candidate {
                        gain,
                        rule,
                        missing_left,
                    });
                }
            }
        }
        best
    }

    fn best_split(&self, rows: &[u32], total: &Stat) -> Option<(usize, Candidate)> {
        let nf = self.bins.len();
        let per_feature: Vec<Option<Candidate>> = if rows.len() * nf >= PARALLEL_WORK {
            (0..nf)
                .into_par_iter()
                .map(|f| self.best_for_feature(f, rows, total))
                .collect()
        } else {
            (0..nf).map(|f| self.best_for_feature(f, rows, total)).collect()
        };
        let mut best: Option<(usize, Candidate)> = None;
        for (f, c) in per_feature.into_iter().enumerate() {
            if let Some(c) = c {
                if best.as_ref().map_or(true, |(_, b)| c.gain > b.gain) {
                    best = Some((f, c));
                }
            }
        }
        best
    }

    fn grow(&self, rows: Vec<u32>) -> Tree {
        let mut nodes = Vec::new();
        self.grow_node(rows, 0, &mut nodes);
        Tree { nodes }
    }

    fn grow_node(&self, rows: Vec<u32>, depth: usize, nodes: &mut Vec<Node>) -> u32 {
        let mut total = Stat::default();
        for &r in &rows {
            total.g += self.grad[r as usize];
            total.h += self.hess[r as usize];
        }
        total.n = rows.len();
        let id = nodes.len() as u32;
        nodes.push(Node::Leaf(self.leaf(&total)));
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_samples_leaf {
            return id;
        }
        let Some((feature, cand)) = self.best_split(&rows, &total) else {
            return id;
        };
        let col = &self.bins[feature];
        let (l, r): (Vec<u32>, Vec<u32>) = rows
            .into_iter()
            .partition(|&row| cand.rule.goes_left(col[row as usize], cand.missing_left));
        let left = self.grow_node(l, depth + 1, nodes);
        let right = self.grow_node(r, depth + 1, nodes);
        nodes[id as usize] = Node::Split {
            feature: feature as u32,
            rule: cand.rule,
            missing_left: cand.missing_left,
            left,
            right,
        };
        id
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn loss(logistic: bool, y: &[f64], raw: &[f64], rows: &[u32]) -> f64 {
    let mut s = 0.0;
    for &r in rows {
        let (t, f) = (y[r as usize], raw[r as usize]);
        s += if logistic {
            let p = sigmoid(f).clamp(1e-15, 1.0 - 1e-15);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        } else {
            (t - f) * (t - f)
        };
    }
    s / rows.len().max(1) as f64
}

impl GbdtModel {
    /// Fits on the columns of `features` against `y` (squared loss, or log
    /// loss on {0, 1} labels when `logistic`).
    pub fn fit(
        features: &Table,
        y: &[f64],
        logistic: bool,
        params: &GbdtParams,
        seed: u64,
    ) -> Result<GbdtModel> {
        params.validate()?;
        let n = features.n_rows();
        if n != y.len() {
            return Err(Error::InvalidParameter("features and targets differ in length".into()));
        }
        if n < 2 * params.min_samples_leaf {
            return Err(Error::Model(format!(
                "{n} rows is fewer than twice min_samples_leaf ({})",
                params.min_samples_leaf
            )));
        }
        let binners: Vec<Binner> = features
            .columns()
            .par_iter()
            .map(|c| Binner::fit(c, params.max_bins))
            .collect();
        let bins: Vec<Vec<u8>> = features
            .columns()
            .par_iter()
            .zip(&binners)
            .map(|(c, b)| b.bin_column(c))
            .collect();
        let names = features.column_names().into_iter().map(String::from).collect();

        let mut order: Vec<u32> = (0..n as u32).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_hold = (n as f64 * params.holdout_fraction).floor() as usize;
        let (hold, train) = order.split_at(n_hold);
        let mut train = train.to_vec();
        train.sort_unstable();
        let mut hold = hold.to_vec();
        hold.sort_unstable();

        let mean = train.iter().map(|&r| y[r as usize]).sum::<f64>() / train.len() as f64;
        let constant = train.iter().all(|&r| y[r as usize] == y[train[0] as usize]);
        let base_score = if logistic {
            let p = mean.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        } else {
            mean
        };
        let mut model = GbdtModel {
            features: names,
            binners,
            base_score,
            trees: Vec::new(),
            logistic,
            holdout_curve: Vec::new(),
        };
        if constant {
            if logistic {
                model.base_score = if y[train[0] as usize] > 0.5 { 40.0 } else { -40.0 };
            }
            return Ok(model);
        }

        let mut raw = vec![base_score; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut best_loss = f64::INFINITY;
        let mut best_iter = 0;
        let mut since_best = 0;
        for _ in 0..params.n_iter {
            for &r in &train {
                let r = r as usize;
                if logistic {
                    let p = sigmoid(raw[r]);
                    grad[r] = p - y[r];
                    hess[r] = (p * (1.0 - p)).max(MIN_HESSIAN);
                } else {
                    grad[r] = raw[r] - y[r];
                    hess[r] = 1.0;
                }
            }
            let tree = Grower {
                params,
                bins: &bins,
                binners: &model.binners,
                grad: &grad,
                hess: &hess,
            }
            .grow(train.clone());
            for (r, v) in raw.iter_mut().enumerate() {
                *v += tree.predict(&bins, r);
            }
            model.trees.push(tree);
            let monitored = if hold.is_empty() { &train } else { &hold };
            let l = loss(logistic, y, &raw, monitored);
            model.holdout_curve.push(l);
            if l < best_loss {
                best_loss = l;
                best_iter = model.trees.len();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= params.early_stop_patience {
                    break;
                }
            }
        }
        model.trees.truncate(best_iter);
        Ok(model)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Holdout loss after each boosting round, including rounds discarded
    /// by truncation.
    pub fn holdout_curve(&self) -> &[f64] {
        &self.holdout_curve
    }

    pub fn feature_names(&self) -> &[String] {
        &self.features
    }

    /// Raw scores, or probabilities for the logistic model.
    pub fn predict(&self, features: &Table) -> Result<Vec<f64>> {
        let bins: Vec<Vec<u8>> = self
            .features
            .iter()
            .zip(&self.binners)
            .map(|(name, b)| features.require_column(name).map(|c| b.bin_column(c)))
            .collect::<Result<_>>()?;
        Ok((0..features.n_rows())
            .map(|r| {
                let raw = self.base_score + self.trees.iter().map(|t| t.predict(&bins, r)).sum::<f64>();
                if self.logistic {
                    sigmoid(raw)
                } else {
                    raw
                }
            })
            .collect())
    }

    /// Bytes of the binned training matrix plus the gradient buffers.
    pub fn working_bytes(n_rows: usize, n_features: usize) -> usize {
        n_rows * n_features + 4 * 8 * n_rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn params() -> GbdtParams {
        GbdtParams::default()
    }

    #[test]
    fn separable_categorical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let levels = ["a", "b", "c", "d"];
        let cats: Vec<&str> = (0..400).map(|_| levels[rng.gen_range(0..4)]).collect();
        let y: Vec<f64> = cats.iter().map(|&c| (c == "a") as u8 as f64).collect();
        let t = Table::new("t", vec![Column::categorical("c", cats.iter().map(|s| Some(*s)))]).unwrap();
        let m = GbdtModel::fit(&t, &y, true, &params(), 0).unwrap();
        let p = m.predict(&t).unwrap();
        let acc = p.iter().zip(&y).filter(|(p, y)| ((**p > 0.5) as u8 as f64) == **y).count();
        assert!(acc as f64 / 400.0 >= 0.99);
    }

    #[test]
    fn constant_target_has_no_trees() {
        let t = Table::new("t", vec![Column::numeric("x", (0..50).map(|i| Some(i as f64)))]).unwrap();
        let m = GbdtModel::fit(&t, &[3.5; 50], false, &params(), 0).unwrap();
        assert_eq!(m.n_trees(), 0);
        assert!(m.predict(&t).unwrap().iter().all(|&p| p == 3.5));
    }

    #[test]
    fn learns_missingness_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..1000 {
            if rng.gen_bool(0.5) {
                x.push(None);
                y.push(5.0 + rng.gen_range(-0.1..0.1));
            } else {
                x.push(Some(rng.gen_range(0.0..1.0)));
                y.push(rng.gen_range(-0.1..0.1));
            }
        }
        let t = Table::new("t", vec![Column::numeric("x", x)]).unwrap();
        let m = GbdtModel::fit(&t, &y, false, &params(), 0).unwrap();
        let r2 = super::super::metrics::r2(&y, &m.predict(&t).unwrap()).unwrap();
        assert!(r2 > 0.95, "r2={r2}");
        let first = m.holdout_curve()[0];
        let best = m.holdout_curve()[m.n_trees() - 1];
        assert!(best <= first);
    }

    #[test]
    fn too_few_rows_error() {
        let t = Table::new("t", vec![Column::numeric("x", (0..10).map(|i| Some(i as f64)))]).unwrap();
        assert!(GbdtModel::fit(&t, &[0.0; 10], false, &params(), 0).is_err());
    }

    #[test]
    fn binning_respects_cap() {
        let col = Column::numeric("x", (0..5000).map(|i| Some(i as f64)));
        let b = Binner::fit(&col, 255);
        assert!(b.n_bins() <= 255);
        let bins = b.bin_column(&col);
        assert!(bins.windows(2).all(|w| w[0] <= w[1]));
        assert!(bins.iter().all(|&x| x != MISSING_BIN));
    }

    #[test]
    fn identical_features_give_identical_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<Option<f64>> = (0..300).map(|_| Some(rng.gen_range(0.0..1.0))).collect();
        let y: Vec<f64> = v.iter().map(|x| (x.unwrap() * 6.0).sin()).collect();
        let one = Table::new("t", vec![Column::numeric("a", v.clone())]).unwrap();
        let two = Table::new(
            "t",
            vec![Column::numeric("a", v.clone()), Column::numeric("b", v)],
        )
        .unwrap();
        let p1 = GbdtModel::fit(&one, &y, false, &params(), 3).unwrap().predict(&one).unwrap();
        let p2 = GbdtModel::fit(&two, &y, false, &params(), 3).unwrap().predict(&two).unwrap();
        assert_eq!(p1, p2);
    }
}
