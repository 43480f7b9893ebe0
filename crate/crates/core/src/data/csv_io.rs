//! Numeric CSV covariate files.
//!
//! Files carry one header row followed by one row per unit. Every cell must
//! parse as a finite `f64`; NaN, infinities, empty cells and ragged rows are
//! rejected with the offending location. Row numbers in errors count data
//! rows from 0 (the header is not counted); columns count from 0.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::nn::Matrix;
use crate::{Error, Result};

/// Optional restrictions on the accepted columns.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    /// Keep only these header names, in this order.
    pub columns: Option<Vec<String>>,
}

pub fn load_csv_covariates(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Matrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_covariates(file, schema)
}

pub fn read_csv_covariates<R: Read>(reader: R, schema: &CsvSchema) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let width = headers.len();
    let selected: Vec<usize> = match &schema.columns {
        None => (0..width).collect(),
        Some(names) => names
            .iter()
            .map(|name| {
                headers.iter().position(|h| h == name).ok_or_else(|| Error::CsvParse {
                    row: 0,
                    column: 0,
                    message: format!("missing column {name:?} in header"),
                })
            })
            .collect::<Result<_>>()?,
    };
    let mut data = Vec::new();
    let mut rows = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Error::CsvParse {
                row,
                column: record.len().min(width),
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for &column in &selected {
            let cell = record[column].trim();
            let value: f64 = cell.parse().map_err(|_| Error::CsvParse {
                row,
                column,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvParse {
                    row,
                    column,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            data.push(value);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, selected.len(), data)
}

/// Writes `x` with header `x0,x1,...`. Values use the shortest decimal form
/// that parses back to the same bits.
pub fn write_csv_covariates(path: impl AsRef<Path>, x: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header: Vec<String> = (0..x.cols()).map(|j| format!("x{j}")).collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for i in 0..x.rows() {
        line.clear();
        for (j, v) in x.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:?}"));
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Matrix> {
        read_csv_covariates(text.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn zeros() {
        let m = read("a,b\n0,0\n0,0\n0,0\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_field_names_row() {
        match read("a,b\n1,2\n3\n") {
            Err(Error::CsvParse { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_and_text_rejected_with_location() {
        match read("a,b\n1,NaN\n") {
            Err(Error::CsvParse { row, column, .. }) => assert_eq!((row, column), (0, 1)),
            other => panic!("unexpected {other:?}"),
        }
        match read("a,b\n1,2\n3,x\n") {
            Err(Error::CsvParse { row, column, .. }) => assert_eq!((row, column), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read("a,b\n1,\n").is_err());
    }

    #[test]
    fn schema_selects_columns() {
        let schema = CsvSchema {
            columns: Some(vec!["c".into(), "a".into()]),
        };
        let m = read_csv_covariates("a,b,c\n1,2,3\n4,5,6\n".as_bytes(), &schema).unwrap();
        assert_eq!(m.data(), &[3.0, 1.0, 6.0, 4.0]);
    }
}
