//! Seeded lakes with planted signal, used by tests, benchmarks and demos.
//!
//! Every base table has a `key` column of `k00000`-style identifiers and a
//! numeric target `y`. Candidate tables join on their own `key` column.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::catalog::LakeCatalog;
use crate::error::{Error, Result};
use crate::evaluate::Workspace;
use crate::synth::write_lake;
use crate::table::{write_csv, Column, Table};

pub const KEY: &str = "key";
pub const TARGET: &str = "y";

pub struct PlantedLake {
    pub base: Table,
    pub tables: Vec<Table>,
    /// Names of the tables that carry target signal.
    pub informative: Vec<String>,
}

impl PlantedLake {
    pub fn catalog(&self) -> Result<LakeCatalog> {
        LakeCatalog::from_tables(self.tables.clone())
    }

    pub fn workspace(&self) -> Result<Workspace> {
        Ok(Workspace::new(self.catalog()?, self.base.clone()))
    }

    /// Writes `base.csv` and the lake under `lake/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&self.base, &dir.join("base.csv"))?;
        write_lake(&self.tables, &dir.join("lake"))
    }
}

fn key(i: usize) -> String {
    format!("k{i:05}")
}

fn std_normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let d = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

fn base_table(y: &[f64]) -> Table {
    Table::new(
        "base",
        vec![
            Column::categorical(KEY, (0..y.len()).map(|i| Some(key(i)))),
            Column::numeric(TARGET, y.iter().map(|&v| Some(v))),
        ],
    )
    .expect("base table")
}

/// A two-column candidate `[key, feature]` over base rows `rows`.
fn candidate(name: &str, feature: &str, rows: &[usize], values: &[f64]) -> Table {
    Table::new(
        name,
        vec![
            Column::categorical(KEY, rows.iter().map(|&i| Some(key(i)))),
            Column::numeric(feature, values.iter().map(|&v| Some(v))),
        ],
    )
    .expect("candidate table")
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, frac: f64) -> Vec<usize> {
    let m = ((n as f64 * frac).round() as usize).clamp(1, n);
    let mut rows: Vec<usize> = rand::seq::index::sample(rng, n, m).into_vec();
    rows.sort_unstable();
    rows
}

fn noise_candidate(rng: &mut ChaCha8Rng, name: &str, n: usize, frac: f64) -> Table {
    let rows = random_rows(rng, n, frac);
    let vals = std_normal(rng, rows.len());
    candidate(name, "value", &rows, &vals)
}

pub const NOISE_LAKE_ROWS: usize = 5000;
pub const INFORMATIVE_COVERAGE: [f64; 3] = [0.07, 0.06, 0.05];

/// 3 informative candidates with disjoint, low coverage of the base keys
/// (`INFORMATIVE_COVERAGE`), 5 noise candidates covering 30-90% of the keys
/// and 22 covering 1-4%. Informative features equal the target up to
/// small noise on the rows they cover.
pub fn noise_lake(seed: u64) -> PlantedLake {
    noise_lake_sized(NOISE_LAKE_ROWS, seed)
}

pub fn noise_lake_sized(n: usize, seed: u64) -> PlantedLake {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = std_normal(&mut rng, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut tables = Vec::new();
    let mut informative = Vec::new();
    let jitter = Normal::new(0.0, 0.05).unwrap();
    let mut start = 0;
    for (j, &c) in INFORMATIVE_COVERAGE.iter().enumerate() {
        let m = (n as f64 * c).round() as usize;
        let mut rows = order[start..start + m].to_vec();
        rows.sort_unstable();
        start += m;
        let vals: Vec<f64> = rows.iter().map(|&i| y[i] + jitter.sample(&mut rng)).collect();
        let name = format!("signal_{j}");
        tables.push(candidate(&name, &format!("signal_{j}"), &rows, &vals));
        informative.push(name);
    }
    let hi = Uniform::new_inclusive(0.3, 0.9);
    for j in 0..5 {
        let frac = hi.sample(&mut rng);
        tables.push(noise_candidate(&mut rng, &format!("wide_{j:02}"), n, frac));
    }
    let lo = Uniform::new_inclusive(0.01, 0.04);
    for j in 0..22 {
        let frac = lo.sample(&mut rng);
        tables.push(noise_candidate(&mut rng, &format!("sparse_{j:02}"), n, frac));
    }
    PlantedLake {
        base: base_table(&y),
        tables,
        informative,
    }
}

/// `cand_a` holds a feature that explains the target; `cand_b_copy` is an
/// identical copy of it. Four noise candidates cover 50-90% of the keys.
pub fn redundancy_lake(seed: u64) -> PlantedLake {
    let n = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let eps = std_normal(&mut rng, n);
    let y: Vec<f64> = x.iter().zip(&eps).map(|(x, e)| 2.0 * x + 0.3 * e).collect();
    let rows: Vec<usize> = (0..n).collect();
    let a = candidate("cand_a", "x", &rows, &x);
    let b = a.with_name("cand_b_copy");
    let mut tables = vec![a, b];
    for j in 0..4 {
        let frac = rng.gen_range(0.5..0.9);
        tables.push(noise_candidate(&mut rng, &format!("noise_{j}"), n, frac));
    }
    PlantedLake {
        base: base_table(&y),
        tables,
        informative: vec!["cand_a".into()],
    }
}

pub const NULL_FRACTION: f64 = 0.6;

/// One candidate `sensor` whose feature is null on 60% of the keys. Null
/// rows have target mean 3; elsewhere the target is `x^2` on `x` uniform
/// in [-2, 2], plus noise.
pub fn null_lake(seed: u64) -> PlantedLake {
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let noise = Normal::new(0.0, 0.3).unwrap();
    for _ in 0..n {
        if rng.gen_bool(NULL_FRACTION) {
            x.push(None);
            y.push(3.0 + noise.sample(&mut rng));
        } else {
            let v: f64 = rng.gen_range(-2.0..2.0);
            x.push(Some(v));
            y.push(v * v + noise.sample(&mut rng));
        }
    }
    let sensor = Table::new(
        "sensor",
        vec![
            Column::categorical(KEY, (0..n).map(|i| Some(key(i)))),
            Column::numeric("reading", x),
        ],
    )
    .expect("sensor table");
    PlantedLake {
        base: base_table(&y),
        tables: vec![sensor],
        informative: vec!["sensor".into()],
    }
}

/// One candidate whose feature equals the target on every key, plus three
/// noise candidates.
pub fn perfect_lake(seed: u64) -> PlantedLake {
    let n = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = std_normal(&mut rng, n);
    let rows: Vec<usize> = (0..n).collect();
    let mut tables = vec![candidate("perfect", "copy_of_y", &rows, &y)];
    for j in 0..3 {
        let frac = rng.gen_range(0.3..1.0);
        tables.push(noise_candidate(&mut rng, &format!("noise_{j}"), n, frac));
    }
    PlantedLake {
        base: base_table(&y),
        tables,
        informative: vec!["perfect".into()],
    }
}

/// A base table whose target is independent of everything, with
/// `extra_columns` further noise columns, and an empty lake.
pub fn independent_base(n: usize, extra_columns: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = std_normal(&mut rng, n);
    let mut t = base_table(&y);
    let extra: Vec<Column> = (0..extra_columns)
        .map(|j| Column::numeric(format!("extra_{j}"), std_normal(&mut rng, n).into_iter().map(Some)))
        .collect();
    t = t.with_columns(extra).expect("extra columns");
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::containment;
    use crate::table::distinct_values;

    fn coverage(l: &PlantedLake, name: &str) -> f64 {
        let q = distinct_values(l.base.column(KEY).unwrap());
        let t = l.tables.iter().find(|t| t.name() == name).unwrap();
        containment(&q, &distinct_values(t.column(KEY).unwrap())).unwrap()
    }

    #[test]
    fn noise_lake_shape() {
        let l = noise_lake_sized(1000, 7);
        assert_eq!(l.tables.len(), 30);
        for (name, c) in l.informative.iter().zip(INFORMATIVE_COVERAGE) {
            assert!((coverage(&l, name) - c).abs() < 1e-9);
        }
        let mut keys = std::collections::HashSet::new();
        for name in &l.informative {
            let t = l.tables.iter().find(|t| t.name() == name).unwrap();
            for k in distinct_values(t.column(KEY).unwrap()).iter() {
                assert!(keys.insert(k.clone()), "informative coverage overlaps");
            }
        }
        for t in &l.tables {
            let c = coverage(&l, t.name());
            if t.name().starts_with("wide") {
                assert!((0.29..=0.91).contains(&c));
            } else if t.name().starts_with("sparse") {
                assert!((0.009..=0.041).contains(&c));
            }
        }
    }

    #[test]
    fn fixtures_are_seeded() {
        assert_eq!(noise_lake_sized(500, 3).tables, noise_lake_sized(500, 3).tables);
        assert_ne!(noise_lake_sized(500, 3).base, noise_lake_sized(500, 4).base);
    }

    #[test]
    fn null_lake_fraction() {
        let l = null_lake(1);
        let nulls = l.tables[0].column("reading").unwrap().null_count();
        let f = nulls as f64 / 2000.0;
        assert!((f - NULL_FRACTION).abs() < 0.05);
    }

    #[test]
    fn redundancy_copy_is_identical() {
        let l = redundancy_lake(0);
        assert_eq!(l.tables[0].columns(), l.tables[1].columns());
        assert_eq!(l.tables[1].name(), "cand_b_copy");
    }
}
