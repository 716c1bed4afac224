//! `traces.csv` and `summary.csv`.
//!
//! Floats are written in scientific notation with 17 significant digits, which
//! round-trips every `f64` exactly. Rows are sorted by `(scheme, p, nu, run,
//! iteration)` before writing, so the files depend only on their contents.

use std::fs;
use std::path::{Path, PathBuf};

use sgc_core::RunTrace;
use thiserror::Error;

use crate::runner::{trace_order, CellSummary};

pub const TRACES_FILE: &str = "traces.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRACES_HEADER: [&str; 6] = ["scheme", "p", "nu", "run", "iteration", "error"];
pub const SUMMARY_HEADER: [&str; 5] = ["scheme", "p", "nu", "mean_final_error", "mean_floor_error"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}, line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_traces(
    traces: &[RunTrace],
    summary: &[CellSummary],
    out_dir: &Path,
) -> Result<(), OutputError> {
    fs::create_dir_all(out_dir).map_err(|source| OutputError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let mut sorted: Vec<&RunTrace> = traces.iter().collect();
    sorted.sort_by(|a, b| trace_order(a, b));
    let path = out_dir.join(TRACES_FILE);
    write_rows(&path, &TRACES_HEADER, |w| {
        for t in &sorted {
            let (scheme, p, nu, run) = (
                t.scheme.as_str(),
                fmt_f64(t.p),
                t.nu.to_string(),
                t.run.to_string(),
            );
            for (it, e) in t.errors.iter().enumerate() {
                w.write_record([scheme, &p, &nu, &run, &it.to_string(), &fmt_f64(*e)])?;
            }
        }
        Ok(())
    })?;

    let mut cells: Vec<&CellSummary> = summary.iter().collect();
    cells.sort_by(|a, b| {
        a.scheme
            .as_str()
            .cmp(b.scheme.as_str())
            .then(a.p.total_cmp(&b.p))
            .then(a.nu.cmp(&b.nu))
    });
    let path = out_dir.join(SUMMARY_FILE);
    write_rows(&path, &SUMMARY_HEADER, |w| {
        for c in &cells {
            w.write_record([
                c.scheme.as_str(),
                &fmt_f64(c.p),
                &c.nu.to_string(),
                &fmt_f64(c.mean_final_error),
                &fmt_f64(c.mean_floor_error),
            ])?;
        }
        Ok(())
    })
}

fn write_rows(
    path: &Path,
    header: &[&str],
    body: impl FnOnce(&mut csv::Writer<fs::File>) -> Result<(), csv::Error>,
) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    body(&mut w).map_err(csv_err)?;
    w.flush().map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One parsed line of `traces.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub scheme: String,
    pub p: f64,
    pub nu: usize,
    pub run: usize,
    pub iteration: usize,
    pub error: f64,
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceRow>, OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(TRACES_HEADER) {
        return Err(OutputError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| OutputError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |k: usize| rec.get(k).ok_or_else(|| bad(format!("missing field {k}")));
        let num = |k: usize| -> Result<f64, OutputError> {
            let s = field(k)?;
            s.parse().map_err(|_| bad(format!("{s:?} is not a number")))
        };
        let int = |k: usize| -> Result<usize, OutputError> {
            let s = field(k)?;
            s.parse().map_err(|_| bad(format!("{s:?} is not an integer")))
        };
        rows.push(TraceRow {
            scheme: field(0)?.to_string(),
            p: num(1)?,
            nu: int(2)?,
            run: int(3)?,
            iteration: int(4)?,
            error: num(5)?,
        });
    }
    Ok(rows)
}
