//! Semi-synthetic lakes built from knowledge triplets.
//!
//! Input is tab-separated `subject<TAB>predicate<TAB>object`, one triple per
//! line, `#` comments allowed. Class membership uses the `rdf:type`
//! predicate and never becomes a table of its own.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::catalog::{manifest_line, MANIFEST_FILE, MANIFEST_HEADER};
use crate::error::{Error, Result};
use crate::table::parse_decimal;
use crate::table::{hash_key, write_csv, Cell, Column, DType, Table};

pub const TYPE_PREDICATE: &str = "rdf:type";
pub const SUBJECT_COLUMN: &str = "Subject";
pub const BINARY_SUBJECT_COLUMN: &str = "subject";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, Default)]
pub struct TripletStore {
    /// Non-type triples in input order.
    pub triples: Vec<Triple>,
    /// subject -> classes
    pub class_facts: BTreeMap<String, BTreeSet<String>>,
}

impl TripletStore {
    pub fn parse(text: &str) -> Result<TripletStore> {
        let mut store = TripletStore::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            if f.len() != 3 {
                return Err(Error::Triplet {
                    line: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", f.len()),
                });
            }
            if f.iter().any(|s| s.is_empty()) {
                return Err(Error::Triplet {
                    line: i + 1,
                    message: "empty field".into(),
                });
            }
            store.push(f[0], f[1], f[2]);
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<TripletStore> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TripletStore::parse(&text)
    }

    pub fn push(&mut self, subject: &str, predicate: &str, object: &str) {
        if predicate == TYPE_PREDICATE {
            self.class_facts
                .entry(subject.to_string())
                .or_default()
                .insert(object.to_string());
        } else {
            self.triples.push(Triple {
                subject: subject.to_string(),
                predicate: predicate.to_string(),
                object: object.to_string(),
            });
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty() && self.class_facts.is_empty()
    }

    /// Distinct predicates in first-appearance order.
    pub fn predicates(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.triples
            .iter()
            .filter(|t| seen.insert(t.predicate.as_str()))
            .map(|t| t.predicate.as_str())
            .collect()
    }

    /// class -> subjects, both sorted.
    pub fn classes(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (s, classes) in &self.class_facts {
            for c in classes {
                out.entry(c.as_str()).or_default().push(s.as_str());
            }
        }
        out
    }

    /// (subject, predicate) -> objects in input order.
    fn objects(&self) -> HashMap<(&str, &str), Vec<&str>> {
        let mut m: HashMap<(&str, &str), Vec<&str>> = HashMap::new();
        for t in &self.triples {
            m.entry((t.subject.as_str(), t.predicate.as_str()))
                .or_default()
                .push(t.object.as_str());
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Binary,
    Base,
    Sampled,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Binary => "binary",
            Variant::Base => "base",
            Variant::Sampled => "sampled",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(Variant::Binary),
            "base" => Ok(Variant::Base),
            "sampled" => Ok(Variant::Sampled),
            other => Err(Error::InvalidParameter(format!("unknown lake variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub variant: Variant,
    /// Sub-tables per surviving seed (Sampled).
    pub n: usize,
    /// Minimum seed arity (Sampled).
    pub arity: usize,
    /// Row fraction of each replica (Sampled).
    pub p: f64,
    /// Replicas per sub-table (Sampled).
    pub n_s: usize,
    /// Smallest sub-table kept (Base).
    pub min_rows: usize,
    pub max_multivalue: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> SynthParams {
        SynthParams {
            variant: Variant::Binary,
            n: 10,
            arity: 8,
            p: 0.7,
            n_s: 2,
            min_rows: 100,
            max_multivalue: 2,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p must be in (0, 1]");
        }
        if self.arity < 3 {
            return bad("arity must be at least 3");
        }
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.max_multivalue == 0 {
            return bad("max_multivalue must be at least 1");
        }
        Ok(())
    }
}

/// File-safe table name: anything outside `[A-Za-z0-9_.-]` becomes `_`.
pub fn sanitize_name(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn unique_names<'a>(raw: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut used = BTreeSet::new();
    raw.into_iter()
        .map(|r| {
            let base = sanitize_name(r);
            let mut name = base.clone();
            let mut i = 2;
            while !used.insert(name.clone()) {
                name = format!("{base}_{i}");
                i += 1;
            }
            name
        })
        .collect()
}

fn typed_column(name: &str, values: &[Option<&str>]) -> Column {
    let numeric = values.iter().flatten().all(|v| parse_decimal(v).is_some())
        && values.iter().any(|v| v.is_some());
    if numeric {
        Column::numeric(name, values.iter().map(|v| v.and_then(parse_decimal)))
    } else {
        Column::categorical(name, values.iter().copied())
    }
}

/// One `[subject, <predicate>]` table per predicate, one row per triple.
pub fn binary_tables(store: &TripletStore) -> Vec<Table> {
    let preds = store.predicates();
    let names = unique_names(preds.iter().copied());
    let mut rows: HashMap<&str, (Vec<Option<&str>>, Vec<Option<&str>>)> = HashMap::new();
    for t in &store.triples {
        let e = rows.entry(t.predicate.as_str()).or_default();
        e.0.push(Some(t.subject.as_str()));
        e.1.push(Some(t.object.as_str()));
    }
    preds
        .iter()
        .zip(names)
        .map(|(p, name)| {
            let (s, o) = &rows[p];
            let subject_col = if *p == BINARY_SUBJECT_COLUMN {
                format!("{BINARY_SUBJECT_COLUMN}_subject")
            } else {
                BINARY_SUBJECT_COLUMN.to_string()
            };
            Table::new(
                name,
                vec![Column::categorical(subject_col, s.iter().copied()), typed_column(p, o)],
            )
            .expect("binary table")
        })
        .collect()
}

/// One wide table per class. Base flattens multi-valued predicates into
/// `<pred>_1..<pred>_m` columns (m capped at `max_multivalue`); a
/// single-valued numeric predicate keeps its bare name. Sampled repeats
/// the subject over the product of its first `max_multivalue` objects per
/// predicate.
pub fn seed_tables(store: &TripletStore, params: &SynthParams) -> Result<Vec<Table>> {
    params.validate()?;
    if store.class_facts.is_empty() {
        return Err(Error::InvalidParameter("the store has no class facts".into()));
    }
    let objects = store.objects();
    let preds = store.predicates();
    let classes: Vec<(&str, Vec<&str>)> = store.classes().into_iter().collect();
    let names = unique_names(classes.iter().map(|c| c.0));
    let mv = params.max_multivalue;

    let tables = classes
        .par_iter()
        .zip(names.par_iter())
        .map(|((_, subjects), name)| {
            let active: Vec<&str> = preds
                .iter()
                .copied()
                .filter(|p| subjects.iter().any(|s| objects.contains_key(&(*s, *p))))
                .collect();
            let get = |s, p| objects_of(&objects, s, p);
            let mut columns = Vec::new();
            match params.variant {
                Variant::Sampled => {
                    let mut subj_cells: Vec<Option<&str>> = Vec::new();
                    let mut cells: Vec<Vec<Option<&str>>> = vec![Vec::new(); active.len()];
                    for s in subjects {
                        let choices: Vec<Vec<Option<&str>>> = active
                            .iter()
                            .map(|p| {
                                let o = get(s, p);
                                if o.is_empty() {
                                    vec![None]
                                } else {
                                    o.iter().take(mv).map(|x| Some(*x)).collect()
                                }
                            })
                            .collect();
                        let mut idx = vec![0usize; active.len()];
                        'product: loop {
                            subj_cells.push(Some(s));
                            for (j, c) in cells.iter_mut().enumerate() {
                                c.push(choices[j][idx[j]]);
                            }
                            let mut j = active.len();
                            loop {
                                if j == 0 {
                                    break 'product;
                                }
                                j -= 1;
                                idx[j] += 1;
                                if idx[j] < choices[j].len() {
                                    continue 'product;
                                }
                                idx[j] = 0;
                            }
                        }
                    }
                    columns.push(Column::categorical(SUBJECT_COLUMN, subj_cells));
                    for (p, c) in active.iter().zip(&cells) {
                        columns.push(typed_column(p, c));
                    }
                }
                _ => {
                    columns.push(Column::categorical(SUBJECT_COLUMN, subjects.iter().map(|s| Some(*s))));
                    for p in &active {
                        let m = subjects.iter().map(|s| get(s, p).len()).max().unwrap_or(0).min(mv);
                        let all_numeric = subjects
                            .iter()
                            .flat_map(|s| get(s, p))
                            .all(|o| parse_decimal(o).is_some());
                        if m == 1 && all_numeric {
                            let vals: Vec<Option<&str>> =
                                subjects.iter().map(|s| get(s, p).first().copied()).collect();
                            columns.push(typed_column(p, &vals));
                        } else {
                            for k in 0..m {
                                let vals: Vec<Option<&str>> =
                                    subjects.iter().map(|s| get(s, p).get(k).copied()).collect();
                                columns.push(typed_column(&format!("{p}_{}", k + 1), &vals));
                            }
                        }
                    }
                }
            }
            dedupe_columns(&mut columns);
            Table::new(name.clone(), columns)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tables)
}

type ObjectMap<'a> = HashMap<(&'a str, &'a str), Vec<&'a str>>;

fn objects_of<'m, 'a>(m: &'m ObjectMap<'a>, s: &'a str, p: &'a str) -> &'m [&'a str] {
    m.get(&(s, p)).map_or(&[], |v| v.as_slice())
}

fn dedupe_columns(columns: &mut [Column]) {
    let mut used = BTreeSet::new();
    for c in columns.iter_mut() {
        let base = c.name().to_string();
        let mut name = base.clone();
        let mut i = 2;
        while !used.insert(name.clone()) {
            name = format!("{base}_{i}");
            i += 1;
        }
        if name != base {
            *c = c.renamed(name);
        }
    }
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

/// `floor(p * n)` with a guard against representation error.
pub fn sample_size(n: usize, p: f64) -> usize {
    ((p * n as f64) + 1e-9).floor() as usize
}

fn project_seed(seed: &Table, cols: &[usize]) -> Table {
    let subject = &seed.columns()[0];
    let mut c = vec![subject.clone()];
    c.extend(cols.iter().map(|&i| seed.columns()[i + 1].clone()));
    Table::new(seed.name(), c).expect("projection of a valid table")
}

fn base_subtables(seed: &Table, params: &SynthParams) -> Vec<Table> {
    let m = seed.n_cols().saturating_sub(1);
    let mut out = Vec::new();
    let mut idx = 0;
    for k in [2, 3] {
        for combo in combinations(m, k) {
            let proj = project_seed(seed, &combo);
            let keep: Vec<usize> = (0..proj.n_rows())
                .filter(|&r| proj.columns()[1..].iter().any(|c| !c.cells()[r].is_null()))
                .collect();
            idx += 1;
            if keep.len() < params.min_rows {
                continue;
            }
            out.push(proj.take(&keep).with_name(format!("{}_b{idx:04}", seed.name())));
        }
    }
    out
}

fn sampled_subtables(seed: &Table, params: &SynthParams) -> Vec<Table> {
    let m = seed.n_cols().saturating_sub(1);
    if m < params.arity {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hash_key(seed.name(), params.seed));
    let lo = params.arity - 2;
    let hi = params.arity;
    let mut out = Vec::new();
    for i in 0..params.n {
        let size = rng.gen_range(lo..=hi);
        let mut cols = sample(&mut rng, m, size).into_vec();
        cols.sort_unstable();
        let sub = project_seed(seed, &cols).with_name(format!("{}_s{i:03}", seed.name()));
        let rows = sub.n_rows();
        let want = sample_size(rows, params.p);
        let mut replicas = Vec::new();
        for j in 0..params.n_s {
            let mut keep = sample(&mut rng, rows, want).into_vec();
            keep.sort_unstable();
            replicas.push(sub.take(&keep).with_name(format!("{}_s{i:03}_r{}", seed.name(), j + 1)));
        }
        out.push(sub);
        out.extend(replicas);
    }
    out
}

/// Sub-tables of every seed. Base: all arity-2 and arity-3 projections with
/// all-null rows removed and small tables dropped. Sampled: `n` random
/// projections of `arity-2..=arity` columns per seed of at least `arity`
/// columns, each followed by `n_s` row samples of fraction `p`.
pub fn subtables(seeds: &[Table], params: &SynthParams) -> Result<Vec<Table>> {
    params.validate()?;
    let per_seed: Vec<Vec<Table>> = seeds
        .par_iter()
        .map(|s| match params.variant {
            Variant::Sampled => sampled_subtables(s, params),
            _ => base_subtables(s, params),
        })
        .collect();
    Ok(per_seed.into_iter().flatten().collect())
}

/// Builds the lake for `params.variant`.
pub fn generate(store: &TripletStore, params: &SynthParams) -> Result<Vec<Table>> {
    params.validate()?;
    match params.variant {
        Variant::Binary => Ok(binary_tables(store)),
        Variant::Base | Variant::Sampled => subtables(&seed_tables(store, params)?, params),
    }
}

/// Writes `<name>.csv` per table plus a manifest pinning each column type.
pub fn write_lake(tables: &[Table], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    for t in tables {
        let rel = format!("{}.csv", t.name());
        write_csv(t, &dir.join(&rel))?;
        let hints: Vec<(String, DType)> = t
            .columns()
            .iter()
            .map(|c| (c.name().to_string(), c.dtype()))
            .collect();
        manifest.push_str(&manifest_line(t.name(), &rel, &hints));
        manifest.push('\n');
    }
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))
}

/// Number of non-null cells divided by all cells, ignoring the first column.
pub fn fill_rate(t: &Table) -> f64 {
    let cells: Vec<&Cell> = t.columns()[1..].iter().flat_map(|c| c.cells()).collect();
    if cells.is_empty() {
        return 1.0;
    }
    cells.iter().filter(|c| !c.is_null()).count() as f64 / cells.len() as f64
}
