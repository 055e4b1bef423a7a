use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::table::{Cell, Column, Table};

/// Left join of an aggregated `right` onto `base`. Every base row is kept
/// once; unmatched rows get nulls. The right key column is dropped and
/// incoming names that collide are prefixed `<right table>__`.
pub fn left_join(base: &Table, right: &Table, base_key: &str, right_key: &str) -> Result<Table> {
    let bk = base.require_column(base_key)?;
    let rk = right.require_column(right_key)?;

    let mut index: HashMap<String, usize> = HashMap::with_capacity(rk.len());
    for (row, cell) in rk.cells().iter().enumerate() {
        if let Some(k) = cell.canonical_key() {
            if index.insert(k.clone(), row).is_some() {
                return Err(Error::Join(format!(
                    "key `{k}` repeats in `{}`.`{right_key}`; aggregate before joining",
                    right.name()
                )));
            }
        }
    }
    let matches: Vec<Option<usize>> = bk
        .cells()
        .iter()
        .map(|c| c.canonical_key().and_then(|k| index.get(&k).copied()))
        .collect();

    let mut used: HashSet<String> = base.column_names().into_iter().map(String::from).collect();
    let mut extra = Vec::with_capacity(right.n_cols().saturating_sub(1));
    for col in right.columns() {
        if col.name() == right_key {
            continue;
        }
        let name = incoming_name(right.name(), col.name(), &used);
        used.insert(name.clone());
        let cells: Vec<Cell> = matches
            .iter()
            .map(|m| m.map_or(Cell::Null, |r| col.cells()[r].clone()))
            .collect();
        extra.push(Column::new(name, col.dtype(), cells)?);
    }
    base.with_columns(extra)
}

fn incoming_name(table: &str, column: &str, used: &HashSet<String>) -> String {
    if !used.contains(column) {
        return column.to_string();
    }
    let prefixed = format!("{table}__{column}");
    if !used.contains(&prefixed) {
        return prefixed;
    }
    (2..)
        .map(|i| format!("{prefixed}_{i}"))
        .find(|n| !used.contains(n))
        .unwrap()
}
