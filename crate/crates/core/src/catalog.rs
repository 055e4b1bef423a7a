//! Lake discovery and per-column profiling.
//!
//! A lake is a directory of CSV files, scanned recursively, or listed by an
//! optional `manifest.tsv` at the lake root. The manifest is line-delimited:
//!
//! ```text
//! # lake-manifest v1
//! <table name>\t<relative path>\t<hints>
//! ```
//!
//! where `<hints>` is empty or a comma-separated list of `column:dtype`
//! pairs (`dtype` is `numeric` or `categorical`). Lines starting with `#`
//! are comments.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{distinct_values, read_csv, DType, DTypeHints, KeySet, Table};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MANIFEST_HEADER: &str = "# lake-manifest v1";
pub const CATALOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub dtype: DType,
    pub row_count: usize,
    pub distinct_count: usize,
    pub null_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableProfile {
    pub table_name: String,
    /// Path relative to the lake root; empty for in-memory tables.
    pub path: String,
    pub row_count: usize,
    pub columns: Vec<ColumnProfile>,
}

impl TableProfile {
    pub fn of(table: &Table, path: impl Into<String>) -> TableProfile {
        let rows = table.n_rows();
        let columns = table
            .columns()
            .iter()
            .map(|c| ColumnProfile {
                name: c.name().to_string(),
                dtype: c.dtype(),
                row_count: rows,
                distinct_count: distinct_values(c).len(),
                null_fraction: if rows == 0 {
                    0.0
                } else {
                    c.null_count() as f64 / rows as f64
                },
            })
            .collect();
        TableProfile {
            table_name: table.name().to_string(),
            path: path.into(),
            row_count: rows,
            columns,
        }
    }

    fn null_cell_fraction(&self) -> f64 {
        let cells = self.row_count * self.columns.len();
        if cells == 0 {
            return 0.0;
        }
        let nulls: f64 = self
            .columns
            .iter()
            .map(|c| c.null_fraction * c.row_count as f64)
            .sum();
        nulls / cells as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub path: String,
    pub reason: String,
}

/// A loaded lake table together with the distinct key set of each column.
#[derive(Debug)]
pub struct LakeTable {
    pub table: Arc<Table>,
    pub keys: Vec<Arc<KeySet>>,
}

impl LakeTable {
    fn new(table: Table) -> LakeTable {
        let keys = table
            .columns()
            .iter()
            .map(|c| Arc::new(distinct_values(c)))
            .collect();
        LakeTable {
            table: Arc::new(table),
            keys,
        }
    }
}

/// Profiles of every table in a lake, plus the loaded tables themselves.
#[derive(Debug, Serialize, Deserialize)]
pub struct LakeCatalog {
    pub lake_root: PathBuf,
    pub manifest_version: u32,
    pub entries: Vec<TableProfile>,
    pub skipped: Vec<SkipRecord>,
    #[serde(skip)]
    tables: Vec<LakeTable>,
    #[serde(skip)]
    by_name: HashMap<String, usize>,
}

/// Column-count and size statistics over a catalog.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CatalogSummary {
    pub n_tables: usize,
    pub total_rows: usize,
    pub total_cols: usize,
    pub avg_rows: f64,
    pub avg_cols: f64,
    pub avg_numeric_cols: f64,
    pub avg_categorical_cols: f64,
    pub avg_null_fraction: f64,
}

struct ManifestEntry {
    name: String,
    path: String,
    hints: DTypeHints,
}

fn parse_manifest(text: &str) -> std::result::Result<Vec<ManifestEntry>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(format!("line {}: expected 2 or 3 tab-separated fields", i + 1));
        }
        let mut hints = DTypeHints::new();
        if let Some(h) = fields.get(2).filter(|h| !h.is_empty()) {
            for pair in h.split(',') {
                let (col, dt) = pair
                    .rsplit_once(':')
                    .ok_or_else(|| format!("line {}: bad hint `{pair}`", i + 1))?;
                let dt = DType::parse(dt)
                    .ok_or_else(|| format!("line {}: unknown dtype `{dt}`", i + 1))?;
                hints.insert(col.to_string(), dt);
            }
        }
        out.push(ManifestEntry {
            name: fields[0].to_string(),
            path: fields[1].to_string(),
            hints,
        });
    }
    Ok(out)
}

/// Renders a manifest line for a table written at `rel_path`.
pub fn manifest_line(name: &str, rel_path: &str, hints: &[(String, DType)]) -> String {
    let h: Vec<String> = hints.iter().map(|(c, d)| format!("{c}:{d}")).collect();
    format!("{name}\t{rel_path}\t{}", h.join(","))
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

impl LakeCatalog {
    /// Scans `root` and profiles every readable table. Unreadable files are
    /// recorded in `skipped` and never abort the scan.
    pub fn scan(root: &Path) -> Result<LakeCatalog> {
        if !root.is_dir() {
            return Err(Error::io(
                root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "lake root is not a directory"),
            ));
        }
        let manifest_path = root.join(MANIFEST_FILE);
        let mut skipped = Vec::new();
        let jobs: Vec<(String, PathBuf, DTypeHints)> = if manifest_path.is_file() {
            let text =
                fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            let entries = parse_manifest(&text).map_err(|m| Error::Ingest {
                row: 0,
                message: format!("{}: {m}", manifest_path.display()),
            })?;
            entries
                .into_iter()
                .map(|e| (e.name, root.join(&e.path), e.hints))
                .collect()
        } else {
            let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
                .follow_links(true)
                .into_iter()
                .filter_map(|e| match e {
                    Ok(e) => Some(e),
                    Err(err) => {
                        skipped.push(SkipRecord {
                            path: err
                                .path()
                                .map(|p| relative(root, p))
                                .unwrap_or_default(),
                            reason: err.to_string(),
                        });
                        None
                    }
                })
                .filter(|e| e.file_type().is_file())
                .map(|e| e.into_path())
                .filter(|p| {
                    p.extension()
                        .is_some_and(|x| x.eq_ignore_ascii_case("csv"))
                })
                .collect();
            files.sort();
            files
                .into_iter()
                .map(|p| {
                    let rel = relative(root, &p);
                    let name = rel
                        .strip_suffix(".csv")
                        .or_else(|| rel.strip_suffix(".CSV"))
                        .unwrap_or(&rel)
                        .to_string();
                    (name, p, DTypeHints::new())
                })
                .collect()
        };

        let loaded: Vec<(String, PathBuf, Result<Table>)> = jobs
            .into_par_iter()
            .map(|(name, path, hints)| {
                let t = read_csv(&path, Some(&hints)).map(|t| t.with_name(name.clone()));
                (name, path, t)
            })
            .collect();

        let mut tables = Vec::new();
        let mut entries = Vec::new();
        let mut by_name = HashMap::new();
        for (name, path, result) in loaded {
            let rel = relative(root, &path);
            match result {
                Ok(table) => {
                    if by_name.contains_key(&name) {
                        skipped.push(SkipRecord {
                            path: rel,
                            reason: format!("duplicate table name `{name}`"),
                        });
                        continue;
                    }
                    by_name.insert(name, tables.len());
                    entries.push(TableProfile::of(&table, rel));
                    tables.push(LakeTable::new(table));
                }
                Err(e) => skipped.push(SkipRecord {
                    path: rel,
                    reason: e.to_string(),
                }),
            }
        }
        Ok(LakeCatalog {
            lake_root: root.to_path_buf(),
            manifest_version: CATALOG_FORMAT_VERSION,
            entries,
            skipped,
            tables,
            by_name,
        })
    }

    /// Builds a catalog over in-memory tables (no backing files).
    pub fn from_tables(tables: Vec<Table>) -> Result<LakeCatalog> {
        let mut by_name = HashMap::new();
        let mut entries = Vec::new();
        let mut loaded = Vec::new();
        for t in tables {
            if by_name.insert(t.name().to_string(), loaded.len()).is_some() {
                return Err(Error::InvalidTable(format!(
                    "duplicate table name `{}`",
                    t.name()
                )));
            }
            entries.push(TableProfile::of(&t, ""));
            loaded.push(LakeTable::new(t));
        }
        Ok(LakeCatalog {
            lake_root: PathBuf::new(),
            manifest_version: CATALOG_FORMAT_VERSION,
            entries,
            skipped: Vec::new(),
            tables: loaded,
            by_name,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tables(&self) -> &[LakeTable] {
        &self.tables
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn table(&self, name: &str) -> Result<&LakeTable> {
        self.table_index(name)
            .map(|i| &self.tables[i])
            .ok_or_else(|| Error::MissingTable(name.to_string()))
    }

    /// Distinct keys of `table.column`.
    pub fn column_keys(&self, table: &str, column: &str) -> Result<&Arc<KeySet>> {
        let lt = self.table(table)?;
        let idx = lt
            .table
            .column_index(column)
            .ok_or_else(|| Error::MissingColumn(format!("{column} (in table `{table}`)")))?;
        Ok(&lt.keys[idx])
    }

    pub fn summary(&self) -> CatalogSummary {
        let n = self.entries.len();
        if n == 0 {
            return CatalogSummary::default();
        }
        let total_rows: usize = self.entries.iter().map(|e| e.row_count).sum();
        let total_cols: usize = self.entries.iter().map(|e| e.columns.len()).sum();
        let count_dtype = |d: DType| -> usize {
            self.entries
                .iter()
                .map(|e| e.columns.iter().filter(|c| c.dtype == d).count())
                .sum()
        };
        let nf = n as f64;
        CatalogSummary {
            n_tables: n,
            total_rows,
            total_cols,
            avg_rows: total_rows as f64 / nf,
            avg_cols: total_cols as f64 / nf,
            avg_numeric_cols: count_dtype(DType::Numeric) as f64 / nf,
            avg_categorical_cols: count_dtype(DType::Categorical) as f64 / nf,
            avg_null_fraction: self
                .entries
                .iter()
                .map(TableProfile::null_cell_fraction)
                .sum::<f64>()
                / nf,
        }
    }

    /// Catalog as versioned JSON text (profiles only; tables reload from
    /// the lake on [`LakeCatalog::load`]).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Loads a saved catalog and reloads its tables from the lake root.
    pub fn load(path: &Path) -> Result<LakeCatalog> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let saved: LakeCatalog = serde_json::from_str(&text).map_err(|e| Error::Ingest {
            row: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        if saved.manifest_version != CATALOG_FORMAT_VERSION {
            return Err(Error::Ingest {
                row: 0,
                message: format!(
                    "catalog version {} unsupported (expected {CATALOG_FORMAT_VERSION})",
                    saved.manifest_version
                ),
            });
        }
        LakeCatalog::scan(&saved.lake_root)
    }
}
