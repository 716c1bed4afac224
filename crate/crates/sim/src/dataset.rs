//! Loading regression datasets from CSV: one row per sample, label in the last column.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use sgc_core::{DataError, Dataset, Matrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("no data rows")]
    Empty,
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, field {field}: {value:?} is not a number")]
    NonNumeric {
        line: u64,
        field: usize,
        value: String,
    },
    #[error("line {line}, field {field}: value is not finite")]
    NonFinite { line: u64, field: usize },
    #[error("line {line}: a row needs at least one feature and a label")]
    TooFewFields { line: u64 },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub fn load_csv(path: &Path, has_header: bool) -> Result<Dataset, LoadError> {
    let file = File::open(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(file, has_header)
}

/// Parses CSV text from any reader. Line numbers in errors are 1-based and count the
/// header line when present.
pub fn parse_csv<R: Read>(reader: R, has_header: bool) -> Result<Dataset, LoadError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(None)
        .from_reader(reader);

    let mut width = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(LoadError::Csv {
                    line,
                    message: e.to_string(),
                });
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(LoadError::Ragged {
                line,
                expected,
                found: record.len(),
            });
        }
        if expected < 2 {
            return Err(LoadError::TooFewFields { line });
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| LoadError::NonNumeric {
                line,
                field: k + 1,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(LoadError::NonFinite { line, field: k + 1 });
            }
            if k + 1 == expected {
                labels.push(v);
            } else {
                features.push(v);
            }
        }
    }
    let Some(width) = width else {
        return Err(LoadError::Empty);
    };
    let x = Matrix::from_row_major(labels.len(), width - 1, features).map_err(DataError::from)?;
    Ok(Dataset::new(x, labels, None)?)
}
