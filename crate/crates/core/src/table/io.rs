//! CSV ingestion and emission.
//!
//! Comma-delimited, RFC-4180 quoting, UTF-8, mandatory header row. On read
//! the tokens `""` and `NA` (any case) are nulls; on write nulls are `""`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{canonical_number, Cell, Column, DType, Table};
use crate::error::{Error, Result};

pub type DTypeHints = HashMap<String, DType>;

fn is_null_token(tok: &str) -> bool {
    tok.is_empty() || tok.eq_ignore_ascii_case("na")
}

fn is_nan_token(tok: &str) -> bool {
    tok.eq_ignore_ascii_case("nan")
}

/// Plain decimal: optional sign, digits with an optional fraction, and an
/// optional exponent. Rejects `inf`, hex and the like.
pub(crate) fn parse_decimal(tok: &str) -> Option<f64> {
    let b = tok.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return None;
        }
    }
    if i != b.len() {
        return None;
    }
    tok.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Reads a CSV file. The table is named after the file stem.
pub fn read_csv(path: &Path, hints: Option<&DTypeHints>) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv_from_reader(name, file, hints)
}

pub fn read_csv_from_reader<R: Read>(
    name: impl Into<String>,
    reader: R,
    hints: Option<&DTypeHints>,
) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(0, e))?,
        None => {
            return Err(Error::Ingest {
                row: 0,
                message: "missing header row".into(),
            })
        }
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    let mut seen = std::collections::HashSet::new();
    for n in &names {
        if !seen.insert(n.as_str()) {
            return Err(Error::DuplicateColumn(n.clone()));
        }
    }

    let width = names.len();
    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); width];
    for (i, rec) in records.enumerate() {
        // Row indices are 1-based data rows (the header is row 0).
        let row = i + 1;
        let rec = rec.map_err(|e| csv_error(row, e))?;
        if rec.len() != width {
            return Err(Error::Ingest {
                row,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (j, tok) in rec.iter().enumerate() {
            raw[j].push(if is_null_token(tok) {
                None
            } else {
                Some(tok.to_string())
            });
        }
    }

    let mut columns = Vec::with_capacity(width);
    for (name, tokens) in names.into_iter().zip(raw) {
        let hinted = hints.and_then(|h| h.get(&name)).copied();
        let dtype = match hinted {
            Some(d) => d,
            None => infer_dtype(&tokens),
        };
        let cells = match dtype {
            DType::Categorical => tokens
                .into_iter()
                .map(|t| t.map_or(Cell::Null, Cell::Text))
                .collect(),
            DType::Numeric => {
                let mut cells = Vec::with_capacity(tokens.len());
                for (i, t) in tokens.into_iter().enumerate() {
                    cells.push(match t {
                        None => Cell::Null,
                        Some(t) if is_nan_token(&t) => Cell::Null,
                        Some(t) => match parse_decimal(&t) {
                            Some(x) => Cell::number(x),
                            None => {
                                return Err(Error::Ingest {
                                    row: i + 1,
                                    message: format!(
                                        "column `{name}` hinted numeric but token `{t}` is not a number"
                                    ),
                                })
                            }
                        },
                    });
                }
                cells
            }
        };
        columns.push(Column::new(name, dtype, cells)?);
    }
    Table::new(name, columns)
}

fn infer_dtype(tokens: &[Option<String>]) -> DType {
    let mut any = false;
    for t in tokens.iter().flatten() {
        if is_nan_token(t) {
            continue;
        }
        if parse_decimal(t).is_none() {
            return DType::Categorical;
        }
        any = true;
    }
    if any {
        DType::Numeric
    } else {
        DType::Categorical
    }
}

fn csv_error(row: usize, e: csv::Error) -> Error {
    Error::Ingest {
        row,
        message: e.to_string(),
    }
}

pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv_to_writer(table, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv_to_writer<W: Write>(table: &Table, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(writer);
    let io_err = |e: csv::Error| Error::io(table.name(), std::io::Error::other(e.to_string()));
    w.write_record(table.column_names()).map_err(io_err)?;
    let mut record: Vec<String> = Vec::with_capacity(table.n_cols());
    for row in 0..table.n_rows() {
        record.clear();
        for col in table.columns() {
            record.push(match &col.cells()[row] {
                Cell::Null => String::new(),
                Cell::Number(x) => canonical_number(*x),
                Cell::Text(s) => s.clone(),
            });
        }
        w.write_record(&record).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| Error::io(table.name(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(s: &str) -> Result<Table> {
        read_csv_from_reader("t", s.as_bytes(), None)
    }

    #[test]
    fn infers_numeric_and_nulls() {
        let t = read("a,b\n1,x\n2,\n").unwrap();
        let a = t.column("a").unwrap();
        assert_eq!(a.dtype(), DType::Numeric);
        assert_eq!(a.cells(), &[Cell::Number(1.0), Cell::Number(2.0)]);
        let b = t.column("b").unwrap();
        assert_eq!(b.dtype(), DType::Categorical);
        assert_eq!(b.cells(), &[Cell::Text("x".into()), Cell::Null]);
    }

    #[test]
    fn mixed_tokens_force_categorical() {
        let t = read("a,b\n1,x\ny,z\n").unwrap();
        let a = t.column("a").unwrap();
        assert_eq!(a.dtype(), DType::Categorical);
        assert_eq!(a.cells(), &[Cell::Text("1".into()), Cell::Text("y".into())]);
    }

    #[test]
    fn ragged_row_reports_index() {
        match read("a,b\n1,2\n3,4,5\n") {
            Err(Error::Ingest { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected ingest error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(matches!(read("a,a\n1,2\n"), Err(Error::DuplicateColumn(_))));
    }

    #[test]
    fn na_sentinel_any_case() {
        let t = read("a\nNA\nna\n3\n").unwrap();
        let a = t.column("a").unwrap();
        assert_eq!(a.dtype(), DType::Numeric);
        assert_eq!(a.null_count(), 2);
    }

    #[test]
    fn hints_override_inference() {
        let mut hints = DTypeHints::new();
        hints.insert("a".into(), DType::Categorical);
        let t = read_csv_from_reader("t", "a\n1\n2\n".as_bytes(), Some(&hints)).unwrap();
        assert_eq!(t.column("a").unwrap().dtype(), DType::Categorical);
        hints.insert("a".into(), DType::Numeric);
        assert!(read_csv_from_reader("t", "a\nx\n".as_bytes(), Some(&hints)).is_err());
    }

    #[test]
    fn quoted_fields() {
        let t = read("a,b\n\"x,y\",\"he said \"\"hi\"\"\"\n").unwrap();
        assert_eq!(t.column("a").unwrap().cells()[0], Cell::Text("x,y".into()));
        assert_eq!(
            t.column("b").unwrap().cells()[0],
            Cell::Text("he said \"hi\"".into())
        );
    }

    fn roundtrip(t: &Table) -> Table {
        let mut buf = Vec::new();
        write_csv_to_writer(t, &mut buf).unwrap();
        read_csv_from_reader(t.name(), buf.as_slice(), None).unwrap()
    }

    fn token() -> impl Strategy<Value = String> {
        prop_oneof![
            Just(String::new()),
            Just("NA".to_string()),
            (-1000i32..1000).prop_map(|x| x.to_string()),
            (-1e6f64..1e6).prop_map(|x| format!("{x:.3}")),
            "[a-z ,\"]{1,6}",
        ]
    }

    proptest! {
        #[test]
        fn read_write_read_is_fixed_point(
            ncols in 1usize..4,
            rows in prop::collection::vec(prop::collection::vec(token(), 4), 0..12)
        ) {
            let mut s = String::new();
            let header: Vec<String> = (0..ncols).map(|i| format!("c{i}")).collect();
            s.push_str(&header.join(","));
            s.push('\n');
            for r in &rows {
                let fields: Vec<String> = r[..ncols]
                    .iter()
                    .map(|t| format!("\"{}\"", t.replace('"', "\"\"")))
                    .collect();
                s.push_str(&fields.join(","));
                s.push('\n');
            }
            let first = read(&s).unwrap();
            let second = roundtrip(&first);
            prop_assert_eq!(&first, &second);
            prop_assert_eq!(&second, &roundtrip(&second));
        }
    }
}
