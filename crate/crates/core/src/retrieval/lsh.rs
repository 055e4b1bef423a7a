//! LSH Ensemble: a cardinality-partitioned, banded MinHash index answering
//! containment-threshold queries.
//!
//! Columns are split into equi-depth partitions by distinct count. Each
//! partition keeps banded signatures for every band width `r` that the
//! parameter table can select. At query time the partition's upper bound
//! `u` and the query size `q` pick the `(b, r)` pair minimizing the
//! weighted false-positive/false-negative integrals at the containment
//! threshold, and the first `b` bands of width `r` are probed.
//!
//! # File format (little endian)
//!
//! ```text
//! magic            8 bytes  "LKJLSHE\0"
//! format_version   u32
//! seed             u64
//! num_perm         u32
//! threshold        f64
//! num_partitions   u32      requested partition count
//! max_r            u32
//! rs               u32 count, then u32 each
//! param table      u32 count, then (f64 xq, u32 b, u32 r) each
//! partitions       u32 count, then (u64 lower, u64 upper) each
//! postings         u32 count, then per posting:
//!                    table name, column name  (u32 length + UTF-8 bytes)
//!                    u64 cardinality, u32 partition
//!                    per r in rs: u32 count, then u64 band keys
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::minhash::{MinHashSketch, MinHasher};
use crate::catalog::LakeCatalog;
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 8] = b"LKJLSHE\0";
pub const INDEX_FORMAT_VERSION: u32 = 1;

const FALSE_POSITIVE_WEIGHT: f64 = 0.5;
const FALSE_NEGATIVE_WEIGHT: f64 = 0.5;
const XQ_GRID: usize = 10;
const SIMPSON_INTERVALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshParams {
    pub threshold: f64,
    pub num_perm: usize,
    pub num_partitions: usize,
    /// Largest band width considered by the parameter search.
    pub max_r: usize,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            threshold: 0.2,
            num_perm: 256,
            num_partitions: 8,
            max_r: 8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Partition {
    lower: u64,
    upper: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posting {
    pub table_name: String,
    pub column_name: String,
    pub cardinality: u64,
    pub partition: u32,
    /// Band keys per entry of `rs`.
    band_keys: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ParamEntry {
    xq: f64,
    b: usize,
    r: usize,
}

type Buckets = HashMap<(u32, u64), Vec<u32>>;

#[derive(Debug)]
pub struct LshEnsembleIndex {
    params: LshParams,
    hasher: MinHasher,
    rs: Vec<usize>,
    param_table: Vec<ParamEntry>,
    partitions: Vec<Partition>,
    postings: Vec<Posting>,
    /// `[partition][r index]`
    buckets: Vec<Vec<Buckets>>,
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = SIMPSON_INTERVALS;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Collision probability for containment `t` when `xq = |X| / |Q|`.
fn collision(t: f64, xq: f64, b: usize, r: usize) -> f64 {
    let jaccard = t / (1.0 + xq - t);
    1.0 - (1.0 - jaccard.powi(r as i32)).powi(b as i32)
}

fn false_positive(threshold: f64, b: usize, r: usize, xq: f64) -> f64 {
    let upper = if xq >= threshold { threshold } else { xq };
    simpson(|t| collision(t, xq, b, r), 0.0, upper)
}

fn false_negative(threshold: f64, b: usize, r: usize, xq: f64) -> f64 {
    if xq < threshold {
        return 0.0;
    }
    let upper = xq.min(1.0);
    simpson(|t| 1.0 - collision(t, xq, b, r), threshold, upper)
}

fn optimal_param(threshold: f64, num_perm: usize, rs: &[usize], xq: f64) -> (usize, usize) {
    let mut best = f64::INFINITY;
    let mut opt = (1, rs[0]);
    for b in 1..=num_perm {
        for &r in rs {
            if b * r > num_perm {
                continue;
            }
            let err = FALSE_POSITIVE_WEIGHT * false_positive(threshold, b, r, xq)
                + FALSE_NEGATIVE_WEIGHT * false_negative(threshold, b, r, xq);
            if err < best {
                best = err;
                opt = (b, r);
            }
        }
    }
    opt
}

fn xq_grid() -> Vec<f64> {
    (0..XQ_GRID)
        .map(|i| (-5.0 + 10.0 * i as f64 / (XQ_GRID - 1) as f64).exp())
        .collect()
}

fn param_table(threshold: f64, num_perm: usize, rs: &[usize]) -> Vec<ParamEntry> {
    xq_grid()
        .into_par_iter()
        .map(|xq| {
            let (b, r) = optimal_param(threshold, num_perm, rs, xq);
            ParamEntry { xq, b, r }
        })
        .collect()
}

fn lookup(table: &[ParamEntry], xq: f64) -> ParamEntry {
    let i = table.partition_point(|e| e.xq < xq);
    table[i.min(table.len() - 1)]
}

fn band_keys(minima: &[u64], r: usize) -> Vec<u64> {
    minima
        .chunks_exact(r)
        .map(|band| {
            let mut bytes = Vec::with_capacity(8 * r);
            for m in band {
                bytes.extend_from_slice(&m.to_le_bytes());
            }
            xxh3_64_with_seed(&bytes, r as u64)
        })
        .collect()
}

/// Equi-depth split of sorted cardinalities that never separates equal
/// values, so partition ranges do not overlap.
fn partition_bounds(sorted_cards: &[u64], num_partitions: usize) -> Vec<(usize, usize)> {
    let n = sorted_cards.len();
    if n == 0 {
        return Vec::new();
    }
    let parts = num_partitions.clamp(1, n);
    let mut bounds = Vec::new();
    let mut start = 0;
    for p in 1..=parts {
        if start >= n {
            break;
        }
        let mut end = if p == parts { n } else { (n * p / parts).max(start + 1) };
        while end < n && sorted_cards[end] == sorted_cards[end - 1] {
            end += 1;
        }
        bounds.push((start, end));
        start = end;
    }
    bounds
}

impl LshEnsembleIndex {
    /// Sketches and indexes every non-empty column of the catalog.
    pub fn build(cat: &LakeCatalog, params: LshParams) -> Result<LshEnsembleIndex> {
        if !(params.threshold > 0.0 && params.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "index threshold {} must be in (0, 1)",
                params.threshold
            )));
        }
        if params.num_perm == 0 || params.num_partitions == 0 || params.max_r == 0 {
            return Err(Error::InvalidParameter(
                "num_perm, num_partitions and max_r must be positive".into(),
            ));
        }
        let hasher = MinHasher::new(params.seed, params.num_perm);
        let all_rs: Vec<usize> = (1..=params.max_r.min(params.num_perm)).collect();
        let table = param_table(params.threshold, params.num_perm, &all_rs);
        let mut rs: Vec<usize> = table.iter().map(|e| e.r).collect();
        rs.sort_unstable();
        rs.dedup();

        let columns: Vec<(usize, usize)> = cat
            .tables()
            .iter()
            .enumerate()
            .flat_map(|(t, lt)| (0..lt.keys.len()).map(move |c| (t, c)))
            .filter(|&(t, c)| !cat.tables()[t].keys[c].is_empty())
            .collect();
        let mut postings: Vec<Posting> = columns
            .par_iter()
            .map(|&(t, c)| {
                let lt = &cat.tables()[t];
                let sketch = hasher.sketch(&lt.keys[c]);
                Posting {
                    table_name: lt.table.name().to_string(),
                    column_name: lt.table.columns()[c].name().to_string(),
                    cardinality: sketch.set_cardinality as u64,
                    partition: 0,
                    band_keys: rs.iter().map(|&r| band_keys(&sketch.minima, r)).collect(),
                }
            })
            .collect();

        let mut order: Vec<usize> = (0..postings.len()).collect();
        order.sort_by_key(|&i| (postings[i].cardinality, i));
        let sorted: Vec<u64> = order.iter().map(|&i| postings[i].cardinality).collect();
        let mut partitions = Vec::new();
        for (p, (s, e)) in partition_bounds(&sorted, params.num_partitions).into_iter().enumerate() {
            partitions.push(Partition {
                lower: sorted[s],
                upper: sorted[e - 1],
            });
            for &i in &order[s..e] {
                postings[i].partition = p as u32;
            }
        }

        let mut index = LshEnsembleIndex {
            params,
            hasher,
            rs,
            param_table: table,
            partitions,
            postings,
            buckets: Vec::new(),
        };
        index.rebuild_buckets();
        Ok(index)
    }

    fn rebuild_buckets(&mut self) {
        let mut buckets: Vec<Vec<Buckets>> = (0..self.partitions.len())
            .map(|_| (0..self.rs.len()).map(|_| Buckets::new()).collect())
            .collect();
        for (id, p) in self.postings.iter().enumerate() {
            for (ri, keys) in p.band_keys.iter().enumerate() {
                let b = &mut buckets[p.partition as usize][ri];
                for (band, &k) in keys.iter().enumerate() {
                    b.entry((band as u32, k)).or_default().push(id as u32);
                }
            }
        }
        self.buckets = buckets;
    }

    pub fn params(&self) -> LshParams {
        self.params
    }

    pub fn hasher(&self) -> &MinHasher {
        &self.hasher
    }

    pub fn len(&self) -> usize {
        self.postings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }

    pub fn posting(&self, id: usize) -> &Posting {
        &self.postings[id]
    }

    pub fn postings(&self) -> &[Posting] {
        &self.postings
    }

    /// `(lower, upper)` cardinality bounds per partition.
    pub fn partition_ranges(&self) -> Vec<(u64, u64)> {
        self.partitions.iter().map(|p| (p.lower, p.upper)).collect()
    }

    /// Posting ids whose banded signatures collide with the sketch, in
    /// insertion order. `threshold` must not be below the build threshold.
    pub fn query_sketch(&self, sketch: &MinHashSketch, threshold: f64) -> Result<Vec<usize>> {
        if sketch.seed != self.params.seed || sketch.num_perm() != self.params.num_perm {
            return Err(Error::SketchMismatch(format!(
                "query sketch seed/num_perm {}/{} does not match index {}/{}",
                sketch.seed,
                sketch.num_perm(),
                self.params.seed,
                self.params.num_perm
            )));
        }
        if threshold + 1e-12 < self.params.threshold {
            return Err(Error::InvalidParameter(format!(
                "query threshold {threshold} is below the index threshold {}",
                self.params.threshold
            )));
        }
        if sketch.set_cardinality == 0 || self.postings.is_empty() {
            return Ok(Vec::new());
        }
        let retuned;
        let table: &[ParamEntry] = if (threshold - self.params.threshold).abs() <= 1e-12 {
            &self.param_table
        } else {
            retuned = param_table(threshold, self.params.num_perm, &self.rs);
            &retuned
        };

        let q = sketch.set_cardinality as f64;
        let mut query_bands: Vec<Option<Vec<u64>>> = vec![None; self.rs.len()];
        let mut hit = vec![false; self.postings.len()];
        for (p, part) in self.partitions.iter().enumerate() {
            let entry = lookup(table, part.upper as f64 / q);
            let ri = self
                .rs
                .iter()
                .position(|&r| r == entry.r)
                .expect("parameter table only selects indexed band widths");
            let keys = query_bands[ri]
                .get_or_insert_with(|| band_keys(&sketch.minima, entry.r));
            let buckets = &self.buckets[p][ri];
            for (band, &k) in keys.iter().take(entry.b).enumerate() {
                if let Some(ids) = buckets.get(&(band as u32, k)) {
                    for &id in ids {
                        hit[id as usize] = true;
                    }
                }
            }
        }
        Ok(hit
            .into_iter()
            .enumerate()
            .filter_map(|(i, h)| h.then_some(i))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        put_u32(&mut out, INDEX_FORMAT_VERSION);
        out.extend_from_slice(&self.params.seed.to_le_bytes());
        put_u32(&mut out, self.params.num_perm as u32);
        out.extend_from_slice(&self.params.threshold.to_le_bytes());
        put_u32(&mut out, self.params.num_partitions as u32);
        put_u32(&mut out, self.params.max_r as u32);
        put_u32(&mut out, self.rs.len() as u32);
        for &r in &self.rs {
            put_u32(&mut out, r as u32);
        }
        put_u32(&mut out, self.param_table.len() as u32);
        for e in &self.param_table {
            out.extend_from_slice(&e.xq.to_le_bytes());
            put_u32(&mut out, e.b as u32);
            put_u32(&mut out, e.r as u32);
        }
        put_u32(&mut out, self.partitions.len() as u32);
        for p in &self.partitions {
            out.extend_from_slice(&p.lower.to_le_bytes());
            out.extend_from_slice(&p.upper.to_le_bytes());
        }
        put_u32(&mut out, self.postings.len() as u32);
        for p in &self.postings {
            put_str(&mut out, &p.table_name);
            put_str(&mut out, &p.column_name);
            out.extend_from_slice(&p.cardinality.to_le_bytes());
            put_u32(&mut out, p.partition);
            for keys in &p.band_keys {
                put_u32(&mut out, keys.len() as u32);
                for k in keys {
                    out.extend_from_slice(&k.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<LshEnsembleIndex> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != INDEX_MAGIC {
            return Err(Error::IndexFormat("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != INDEX_FORMAT_VERSION {
            return Err(Error::IndexFormat(format!(
                "format version {version} unsupported (expected {INDEX_FORMAT_VERSION})"
            )));
        }
        let seed = r.u64()?;
        let num_perm = r.u32()? as usize;
        let threshold = r.f64()?;
        let num_partitions = r.u32()? as usize;
        let max_r = r.u32()? as usize;
        let n_rs = r.u32()? as usize;
        let rs = (0..n_rs).map(|_| r.u32().map(|x| x as usize)).collect::<Result<Vec<_>>>()?;
        if rs.iter().any(|&x| x == 0 || x > num_perm) {
            return Err(Error::IndexFormat("band width out of range".into()));
        }
        let n_params = r.u32()? as usize;
        let mut param_table = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let xq = r.f64()?;
            let b = r.u32()? as usize;
            let rr = r.u32()? as usize;
            if !rs.contains(&rr) || b * rr > num_perm {
                return Err(Error::IndexFormat("parameter table entry out of range".into()));
            }
            param_table.push(ParamEntry { xq, b, r: rr });
        }
        if param_table.is_empty() {
            return Err(Error::IndexFormat("empty parameter table".into()));
        }
        let n_parts = r.u32()? as usize;
        let mut partitions = Vec::with_capacity(n_parts);
        for _ in 0..n_parts {
            partitions.push(Partition {
                lower: r.u64()?,
                upper: r.u64()?,
            });
        }
        let n_post = r.u32()? as usize;
        let mut postings = Vec::with_capacity(n_post);
        for _ in 0..n_post {
            let table_name = r.string()?;
            let column_name = r.string()?;
            let cardinality = r.u64()?;
            let partition = r.u32()?;
            if partition as usize >= n_parts {
                return Err(Error::IndexFormat("posting partition out of range".into()));
            }
            let mut band_keys = Vec::with_capacity(rs.len());
            for &width in &rs {
                let n = r.u32()? as usize;
                if n != num_perm / width {
                    return Err(Error::IndexFormat("band count does not match width".into()));
                }
                band_keys.push((0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?);
            }
            postings.push(Posting {
                table_name,
                column_name,
                cardinality,
                partition,
                band_keys,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::IndexFormat("trailing bytes".into()));
        }
        let mut index = LshEnsembleIndex {
            params: LshParams {
                threshold,
                num_perm,
                num_partitions,
                max_r,
                seed,
            },
            hasher: MinHasher::new(seed, num_perm),
            rs,
            param_table,
            partitions,
            postings,
            buckets: Vec::new(),
        };
        index.rebuild_buckets();
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<LshEnsembleIndex> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        LshEnsembleIndex::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::IndexFormat("truncated index file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::IndexFormat("invalid UTF-8 in name".into()))
    }
}
