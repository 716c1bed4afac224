//! Parallel sweep over `(scheme, p, ν, run)` cells with per-cell summaries.

use std::cmp::Ordering;

use rayon::prelude::*;
use sgc_core::experiment::{run_cell, zero_start, CellCoord, CellRun, Instance};
use sgc_core::metrics;
use sgc_core::data::generate_synthetic;
use sgc_core::{NumericsError, RunTrace, SchemeKind, SchemeSpec};
use thiserror::Error;

use crate::config::{DataConfig, ExperimentConfig};
use crate::dataset::{load_csv, LoadError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("loading data: {0}")]
    Load(#[from] LoadError),
    #[error("generating data: {0}")]
    Data(#[from] sgc_core::DataError),
    #[error("preparing instance: {0}")]
    Numerics(#[from] NumericsError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Builds the dataset named by the config and precomputes `β*` and the spectral
/// constants.
pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance, RunError> {
    let data = match &cfg.data {
        DataConfig::Synthetic(s) => generate_synthetic(&s.to_synth(cfg.master_seed))?,
        DataConfig::Csv { path, has_header } => load_csv(path, *has_header)?,
    };
    Ok(Instance::new(data)?)
}

/// A run that aborted; the rest of the sweep is unaffected.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub scheme: SchemeKind,
    pub p: f64,
    pub nu: usize,
    pub run: usize,
    pub message: String,
}

/// Aggregate over the successful repetitions of one `(scheme, p, ν)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub scheme: SchemeKind,
    pub p: f64,
    pub nu: usize,
    pub runs: usize,
    pub mean_final_error: f64,
    pub mean_floor_error: f64,
    pub mean_trace: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub traces: Vec<RunTrace>,
    pub summary: Vec<CellSummary>,
    pub failures: Vec<CellFailure>,
}

/// The canonical output order: scheme id, then `p`, `ν`, run.
pub fn trace_order(a: &RunTrace, b: &RunTrace) -> Ordering {
    a.scheme
        .as_str()
        .cmp(b.scheme.as_str())
        .then(a.p.total_cmp(&b.p))
        .then(a.nu.cmp(&b.nu))
        .then(a.run.cmp(&b.run))
}

/// Every cell of the sweep, in a fixed order.
pub fn cells(cfg: &ExperimentConfig, specs: &[SchemeSpec]) -> Vec<CellRun> {
    let mut out = Vec::new();
    for spec in specs {
        for (p_index, &p) in cfg.p_values.iter().enumerate() {
            for (nu_index, &nu) in cfg.nu_values.iter().enumerate() {
                for run in 0..cfg.repetitions {
                    out.push(CellRun {
                        spec: *spec,
                        n: cfg.n,
                        d: cfg.d,
                        p,
                        nu,
                        iterations: cfg.iterations,
                        projection: cfg.projection_spec(),
                        coord: CellCoord {
                            p_index,
                            nu_index,
                            run,
                        },
                        master_seed: cfg.master_seed,
                    });
                }
            }
        }
    }
    out
}

/// Runs every cell on a pool of `threads` workers (`0` lets rayon choose). The
/// result does not depend on the thread count or scheduling.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    instance: &Instance,
    threads: usize,
) -> Result<ExperimentOutput, RunError> {
    let specs = cfg.scheme_specs(instance);
    let cells = cells(cfg, &specs);
    let beta0 = zero_start(instance);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| (cell, run_cell(instance, &beta0, cell)))
            .collect()
    });

    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (cell, res) in results {
        match res {
            Ok(t) => traces.push(t),
            Err(e) => failures.push(CellFailure {
                scheme: cell.spec.kind,
                p: cell.p,
                nu: cell.nu,
                run: cell.coord.run,
                message: e.to_string(),
            }),
        }
    }
    traces.sort_by(trace_order);
    let summary = summarize(&traces, cfg.floor_window);
    Ok(ExperimentOutput {
        traces,
        summary,
        failures,
    })
}

/// Groups sorted traces by `(scheme, p, ν)` and averages them. The floor window is
/// capped at the trace length.
pub fn summarize(sorted: &[RunTrace], window: usize) -> Vec<CellSummary> {
    let same_cell =
        |a: &RunTrace, b: &RunTrace| a.scheme == b.scheme && a.p == b.p && a.nu == b.nu;
    sorted
        .chunk_by(same_cell)
        .map(|group| {
            let len = group.iter().map(|t| t.errors.len()).min().unwrap_or(0);
            let mut mean_trace = vec![0.0; len];
            for t in group {
                for (acc, e) in mean_trace.iter_mut().zip(&t.errors) {
                    *acc += e;
                }
            }
            let k = group.len() as f64;
            mean_trace.iter_mut().for_each(|v| *v /= k);
            let finals: Vec<f64> = group.iter().map(RunTrace::final_error).collect();
            let floors: Vec<f64> = group
                .iter()
                .map(|t| metrics::error_floor(&t.errors, window.min(t.errors.len())).unwrap_or(f64::NAN))
                .collect();
            CellSummary {
                scheme: group[0].scheme,
                p: group[0].p,
                nu: group[0].nu,
                runs: group.len(),
                mean_final_error: metrics::mean(&finals),
                mean_floor_error: metrics::mean(&floors),
                mean_trace,
            }
        })
        .collect()
}
