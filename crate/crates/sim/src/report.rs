//! Convergence bounds (thm3, thm4) for a configured instance, next to the empirical
//! mean squared error when traces are available.

use sgc_core::assignment::{replication_degrees, ZeroDegreePolicy};
use sgc_core::bounds::{thm3_bound, thm4_bound};
use sgc_core::experiment::{zero_start, Instance};
use sgc_core::linalg;
use sgc_core::{AssignmentError, BoundError, BoundInputs, SchemeKind};

use crate::config::ExperimentConfig;
use crate::output::TraceRow;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub p: f64,
    pub inputs: BoundInputs,
    pub thm3: Result<f64, BoundError>,
    /// `None` when no feasible radius (or `c_sq` override) is configured.
    pub thm4: Option<Result<f64, BoundError>>,
    /// Mean of `‖β_T − β*‖²` over the SGC runs at this `p` and the first `ν`.
    pub empirical_mse: Option<f64>,
}

/// Instance constants shared by every `p`: the SGC degree profile gives `d` and
/// `d_min`, `λ` is `λ_min(XᵀX)` and `C²` the closed-form per-row gradient bound
/// over the projection ball.
pub fn bound_inputs(cfg: &ExperimentConfig, inst: &Instance) -> Result<BoundInputs, AssignmentError> {
    let profile = replication_degrees(inst.data.x(), cfg.d, cfg.n, ZeroDegreePolicy::Clamp)?;
    let beta0 = zero_start(inst);
    Ok(BoundInputs {
        epsilon: cfg.bounds.epsilon,
        iterations: cfg.iterations,
        p: 0.0,
        d: profile.avg_degree(),
        mu: inst.spectral.mu,
        residual_norm_sq: inst.residual_norm_sq,
        spectral_norm: inst.spectral.spectral_norm,
        beta0_err_sq: linalg::distance(&beta0, &inst.beta_star).powi(2),
        lambda: cfg.bounds.lambda.unwrap_or(inst.lambda_min),
        c_sq: cfg
            .bounds
            .c_sq
            .or_else(|| cfg.projection.radius.map(|r| inst.max_row_gradient_sq(r)))
            .unwrap_or(f64::NAN),
        n: cfg.n,
        m: inst.m(),
        d_min: profile.min_degree(),
    })
}

pub fn bound_rows(
    cfg: &ExperimentConfig,
    inst: &Instance,
    traces: Option<&[TraceRow]>,
) -> Result<Vec<BoundRow>, AssignmentError> {
    let base = bound_inputs(cfg, inst)?;
    let nu = cfg.nu_values[0];
    Ok(cfg
        .p_values
        .iter()
        .map(|&p| {
            let inputs = BoundInputs { p, ..base };
            BoundRow {
                p,
                inputs,
                thm3: thm3_bound(&inputs),
                thm4: (!inputs.c_sq.is_nan()).then(|| thm4_bound(&inputs)),
                empirical_mse: traces.and_then(|rows| empirical_mse(rows, p, nu, cfg.iterations)),
            }
        })
        .collect())
}

fn empirical_mse(rows: &[TraceRow], p: f64, nu: usize, iterations: usize) -> Option<f64> {
    let finals: Vec<f64> = rows
        .iter()
        .filter(|r| {
            r.scheme == SchemeKind::Sgc.as_str()
                && r.p == p
                && r.nu == nu
                && r.iteration == iterations
        })
        .map(|r| r.error * r.error)
        .collect();
    (!finals.is_empty()).then(|| sgc_core::metrics::mean(&finals))
}
