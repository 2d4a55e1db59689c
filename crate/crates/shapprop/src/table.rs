//! Numeric CSV tables with a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use shapprop_core::Matrix;
use thiserror::Error;

/// Name of the target column; it is split off on read.
pub const TARGET_COLUMN: &str = "y";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: row {row} has {found} fields, header has {expected}")]
    Ragged {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub x: Matrix,
    /// Contents of the `y` column, if the file had one.
    pub y: Option<Vec<f64>>,
}

impl Table {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.x.iter_rows().map(<[f64]>::to_vec).collect()
    }
}

/// Reads a numeric CSV. Numbers are parsed with Rust's locale-independent
/// float grammar.
pub fn read_table(path: &Path) -> Result<Table, TableError> {
    let csv_err = |source| TableError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let target = header.iter().position(|h| h == TARGET_COLUMN);
    let columns: Vec<String> = header
        .iter()
        .filter(|h| *h != TARGET_COLUMN)
        .cloned()
        .collect();

    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != header.len() {
            return Err(TableError::Ragged {
                path: path.to_path_buf(),
                row: r + 1,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| TableError::Parse {
                    path: path.to_path_buf(),
                    row: r + 1,
                    column: header[c].clone(),
                    value: field.to_owned(),
                })?;
            if Some(c) == target {
                y.push(v);
            } else {
                data.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(TableError::Empty {
            path: path.to_path_buf(),
        });
    }
    let x = Matrix::new(rows, columns.len(), data).expect("row lengths checked");
    Ok(Table {
        columns,
        x,
        y: target.map(|_| y),
    })
}

/// `v` with 9 significant digits, in the shortest of fixed or exponent
/// notation (like C's `%.9g`).
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

/// Writes a header and rows of numbers.
pub fn write_table<'a, I>(path: &Path, header: &[String], rows: I) -> Result<(), TableError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    write_records(
        path,
        header,
        rows.into_iter()
            .map(|r| r.iter().map(|v| format_number(*v)).collect()),
    )
}

/// Writes a header and preformatted string records.
pub fn write_records<I>(path: &Path, header: &[String], records: I) -> Result<(), TableError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let io_err = |source| TableError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |source| TableError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(header).map_err(csv_err)?;
    for rec in records {
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| io_err(e.into_error()))?
        .flush()
        .map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-115.0), "-115");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333");
        assert_eq!(format_number(123456789.4), "123456789");
        assert_eq!(format_number(1234567891.0), "1.23456789e9");
        assert_eq!(format_number(2.5e-7), "2.5e-7");
        assert_eq!(format_number(-0.000123456789123), "-0.000123456789");
    }

    #[test]
    fn formatted_values_parse_back_within_precision() {
        for v in [
            std::f64::consts::PI,
            -1e-12,
            6.02214076e23,
            0.1 + 0.2,
            99999.99999,
        ] {
            let back: f64 = format_number(v).parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-8, "{v} -> {back}");
        }
    }

    #[test]
    fn read_splits_target_and_reports_bad_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "a,y,b\n1,10,2\n3,20,4.5\n").unwrap();
        let t = read_table(&p).unwrap();
        assert_eq!(t.columns, ["a", "b"]);
        assert_eq!(t.x.as_slice(), &[1.0, 2.0, 3.0, 4.5]);
        assert_eq!(t.y, Some(vec![10.0, 20.0]));

        std::fs::write(&p, "a,b\n1,x\n").unwrap();
        let err = read_table(&p).unwrap_err();
        assert!(matches!(&err, TableError::Parse { column, .. } if column == "b"));

        std::fs::write(&p, "a,b\n1\n").unwrap();
        assert!(matches!(read_table(&p), Err(TableError::Ragged { .. })));

        std::fs::write(&p, "a,b\n").unwrap();
        assert!(matches!(read_table(&p), Err(TableError::Empty { .. })));
    }
}
