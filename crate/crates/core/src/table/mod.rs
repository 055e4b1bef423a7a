//! Columnar in-memory tables with typed, null-bearing cells.
//!
//! Tables are immutable once built. Column cell buffers are reference
//! counted so projections and joins share storage with their inputs.

mod io;
mod keys;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use io::parse_decimal;
pub use io::{read_csv, read_csv_from_reader, write_csv, write_csv_to_writer, DTypeHints};
pub use keys::{canonical_number, distinct_values, hash_key, KeySet};

/// Logical type of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    Numeric,
    Categorical,
}

impl DType {
    pub fn as_str(self) -> &'static str {
        match self {
            DType::Numeric => "numeric",
            DType::Categorical => "categorical",
        }
    }

    pub fn parse(s: &str) -> Option<DType> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" | "num" | "n" => Some(DType::Numeric),
            "categorical" | "cat" | "c" | "text" => Some(DType::Categorical),
            _ => None,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single table cell.
///
/// `Number` never holds NaN and `Text` is never empty; use the `number` and
/// `text` constructors, which map those inputs to `Null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Null,
    Number(f64),
    Text(String),
}

impl Cell {
    pub fn number(x: f64) -> Cell {
        if x.is_nan() {
            Cell::Null
        } else {
            Cell::Number(x)
        }
    }

    pub fn text(s: impl Into<String>) -> Cell {
        let s = s.into();
        if s.is_empty() {
            Cell::Null
        } else {
            Cell::Text(s)
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Canonical string key used for set semantics and join matching.
    /// `None` for nulls.
    pub fn canonical_key(&self) -> Option<String> {
        match self {
            Cell::Null => None,
            Cell::Number(x) => Some(canonical_number(*x)),
            Cell::Text(s) => Some(s.clone()),
        }
    }

    fn byte_size(&self) -> usize {
        match self {
            Cell::Null => 0,
            Cell::Number(_) => 8,
            Cell::Text(s) => s.len(),
        }
    }
}

/// A named, typed column. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    dtype: DType,
    cells: Arc<Vec<Cell>>,
}

impl Column {
    /// Checked constructor: every non-null cell must match `dtype`.
    pub fn new(name: impl Into<String>, dtype: DType, cells: Vec<Cell>) -> Result<Column> {
        let name = name.into();
        for (row, cell) in cells.iter().enumerate() {
            let ok = match (cell, dtype) {
                (Cell::Null, _) => true,
                (Cell::Number(x), DType::Numeric) => !x.is_nan(),
                (Cell::Text(s), DType::Categorical) => !s.is_empty(),
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidTable(format!(
                    "column `{name}` row {row}: cell {cell:?} does not match dtype {dtype}"
                )));
            }
        }
        Ok(Column {
            name,
            dtype,
            cells: Arc::new(cells),
        })
    }

    pub fn numeric<I>(name: impl Into<String>, values: I) -> Column
    where
        I: IntoIterator<Item = Option<f64>>,
    {
        let cells = values
            .into_iter()
            .map(|v| v.map_or(Cell::Null, Cell::number))
            .collect();
        Column {
            name: name.into(),
            dtype: DType::Numeric,
            cells: Arc::new(cells),
        }
    }

    pub fn categorical<I, S>(name: impl Into<String>, values: I) -> Column
    where
        I: IntoIterator<Item = Option<S>>,
        S: Into<String>,
    {
        let cells = values
            .into_iter()
            .map(|v| v.map_or(Cell::Null, Cell::text))
            .collect();
        Column {
            name: name.into(),
            dtype: DType::Categorical,
            cells: Arc::new(cells),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn null_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_null()).count()
    }

    /// Same cells under another name.
    pub fn renamed(&self, name: impl Into<String>) -> Column {
        Column {
            name: name.into(),
            dtype: self.dtype,
            cells: Arc::clone(&self.cells),
        }
    }

    pub fn take(&self, rows: &[usize]) -> Column {
        Column {
            name: self.name.clone(),
            dtype: self.dtype,
            cells: Arc::new(rows.iter().map(|&r| self.cells[r].clone()).collect()),
        }
    }

    /// Approximate materialized size: 8 bytes per numeric cell, text bytes
    /// plus an 8-byte offset per categorical cell, one validity byte per
    /// eight rows.
    pub fn byte_size(&self) -> usize {
        let validity = self.cells.len().div_ceil(8);
        match self.dtype {
            DType::Numeric => 8 * self.cells.len() + validity,
            DType::Categorical => {
                8 * self.cells.len() + self.cells.iter().map(Cell::byte_size).sum::<usize>() + validity
            }
        }
    }
}

/// A named collection of equal-length columns with distinct names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    name: String,
    columns: Vec<Column>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Table> {
        let name = name.into();
        let mut seen = HashSet::new();
        for col in &columns {
            if !seen.insert(col.name()) {
                return Err(Error::DuplicateColumn(col.name().to_string()));
            }
        }
        if let Some(first) = columns.first() {
            if let Some(bad) = columns.iter().find(|c| c.len() != first.len()) {
                return Err(Error::InvalidTable(format!(
                    "table `{name}`: column `{}` has {} rows, expected {}",
                    bad.name(),
                    bad.len(),
                    first.len()
                )));
            }
        }
        Ok(Table { name, columns })
    }

    pub fn empty(name: impl Into<String>) -> Table {
        Table {
            name: name.into(),
            columns: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(&self, name: impl Into<String>) -> Table {
        Table {
            name: name.into(),
            columns: self.columns.clone(),
        }
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(Column::name).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn require_column(&self, name: &str) -> Result<&Column> {
        self.column(name)
            .ok_or_else(|| Error::MissingColumn(format!("{name} (in table `{}`)", self.name)))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column_index(name).is_some()
    }

    /// Rows selected by index, in the given order.
    pub fn take(&self, rows: &[usize]) -> Table {
        Table {
            name: self.name.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
        }
    }

    /// Projection onto the named columns, in the given order.
    pub fn project(&self, names: &[&str]) -> Result<Table> {
        let columns = names
            .iter()
            .map(|n| self.require_column(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        Table::new(self.name.clone(), columns)
    }

    /// All columns except the named ones.
    pub fn drop_columns(&self, names: &[&str]) -> Table {
        Table {
            name: self.name.clone(),
            columns: self
                .columns
                .iter()
                .filter(|c| !names.contains(&c.name()))
                .cloned()
                .collect(),
        }
    }

    /// Appends columns, checking the table invariants.
    pub fn with_columns(&self, extra: Vec<Column>) -> Result<Table> {
        let mut columns = self.columns.clone();
        columns.extend(extra);
        Table::new(self.name.clone(), columns)
    }

    pub fn byte_size(&self) -> usize {
        self.columns.iter().map(Column::byte_size).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_and_empty_become_null() {
        assert_eq!(Cell::number(f64::NAN), Cell::Null);
        assert_eq!(Cell::text(""), Cell::Null);
        let c = Column::numeric("x", [Some(1.0), Some(f64::NAN)]);
        assert_eq!(c.null_count(), 1);
    }

    #[test]
    fn checked_constructors_reject_violations() {
        assert!(Column::new("x", DType::Numeric, vec![Cell::Text("a".into())]).is_err());
        assert!(Column::new("x", DType::Categorical, vec![Cell::Text(String::new())]).is_err());
        let a = Column::numeric("a", [Some(1.0)]);
        let b = Column::numeric("b", [Some(1.0), Some(2.0)]);
        assert!(Table::new("t", vec![a.clone(), b]).is_err());
        assert!(matches!(
            Table::new("t", vec![a.clone(), a]),
            Err(Error::DuplicateColumn(_))
        ));
    }

    #[test]
    fn take_and_project() {
        let t = Table::new(
            "t",
            vec![
                Column::numeric("a", [Some(1.0), Some(2.0), Some(3.0)]),
                Column::categorical("b", [Some("x"), None, Some("z")]),
            ],
        )
        .unwrap();
        let sub = t.take(&[2, 0]);
        assert_eq!(sub.column("a").unwrap().cells()[0], Cell::Number(3.0));
        let p = t.project(&["b"]).unwrap();
        assert_eq!(p.n_cols(), 1);
        assert!(t.project(&["zz"]).is_err());
        assert_eq!(t.drop_columns(&["a"]).column_names(), vec!["b"]);
    }
}
