//! Per-instance precomputation and single-cell execution for experiment sweeps.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::assignment::{
    self, assign_fractional_repetition, assign_partition, assign_replicated, Assignment,
    AssignmentError, DegreeProfile, ZeroDegreePolicy,
};
use crate::data::Dataset;
use crate::engine::{self, EngineError, ProjectionSpec, RunTrace, SchemeKind, SchemeSpec, Simulation};
use crate::linalg::{self, NumericsError, SpectralSummary};
use crate::rng;
use crate::straggler::StragglerModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A dataset with everything the runs and bounds reuse: `β*`, the spectral summary
/// and `λ_min(XᵀX)`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub data: Dataset,
    pub beta_star: Vec<f64>,
    pub spectral: SpectralSummary,
    pub lambda_min: f64,
    pub residual_norm_sq: f64,
}

impl Instance {
    pub fn new(data: Dataset) -> Result<Self, NumericsError> {
        let beta_star = linalg::least_squares(data.x(), data.y(), 1e-12)?;
        let spectral = linalg::incoherence(data.x())?;
        let lambda_min = linalg::min_eigenvalue(data.x(), 1e-12, 100_000)?;
        let residual = linalg::sub(&data.x().mul_vec(&beta_star), data.y());
        Ok(Self {
            residual_norm_sq: linalg::norm_sq(&residual),
            data,
            beta_star,
            spectral,
            lambda_min,
        })
    }

    pub fn m(&self) -> usize {
        self.data.len()
    }

    /// Smoothness constant of the mean loss, `‖XᵀX‖₂ / m`.
    pub fn mean_smoothness(&self) -> f64 {
        self.spectral.spectral_norm / self.m() as f64
    }

    /// Strong-convexity constant of the mean loss, `λ_min(XᵀX) / m`.
    pub fn mean_strong_convexity(&self) -> f64 {
        self.lambda_min / self.m() as f64
    }

    /// `max_i max_{‖β‖ ≤ R} ‖∇L_i(β)‖² = max_i (‖x_i‖ R + |y_i|)² ‖x_i‖²`.
    pub fn max_row_gradient_sq(&self, radius: f64) -> f64 {
        let x = self.data.x();
        (0..self.m())
            .map(|i| {
                let nx = libm::sqrt(x.row_norm_sq(i));
                let r = nx * radius + libm::fabs(self.data.y()[i]);
                r * r * nx * nx
            })
            .fold(0.0, f64::max)
    }
}

/// Coordinates of one repetition within a sweep. The scheme is deliberately not part
/// of the key: every scheme in a cell sees the same placement draw and stragglers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellCoord {
    pub p_index: usize,
    pub nu_index: usize,
    pub run: usize,
}

impl CellCoord {
    pub fn seed(&self, master_seed: u64) -> u64 {
        rng::derive_seed(
            master_seed,
            rng::tag::PROBE,
            &[self.p_index as u64, self.nu_index as u64, self.run as u64],
        )
    }
}

/// The placement each scheme uses: random replication with norm-proportional degrees
/// (SGC, Send-All), random `d`-fold replication (BGC), fractional repetition
/// (ErasureHead) or a plain partition (Ignore-Stragglers, exact GD).
pub fn scheme_assignment(
    kind: SchemeKind,
    data: &Dataset,
    n: usize,
    d: f64,
    seed: u64,
) -> Result<Assignment, AssignmentError> {
    let m = data.len();
    match kind {
        SchemeKind::Sgc | SchemeKind::SgcSendAll => {
            let profile =
                assignment::replication_degrees(data.x(), d, n, ZeroDegreePolicy::Clamp)?;
            assign_replicated(&profile, n, seed)
        }
        SchemeKind::Bgc => {
            let profile = DegreeProfile::constant(m, libm::round(d) as usize, n)?;
            assign_replicated(&profile, n, seed)
        }
        SchemeKind::ErasureHead => assign_fractional_repetition(m, n, libm::round(d) as usize),
        SchemeKind::IgnoreStragglers | SchemeKind::ExactGd => assign_partition(m, n),
    }
}

/// One repetition of one `(scheme, p, ν)` cell.
#[derive(Debug, Clone, Copy)]
pub struct CellRun {
    pub spec: SchemeSpec,
    pub n: usize,
    pub d: f64,
    pub p: f64,
    pub nu: usize,
    pub iterations: usize,
    pub projection: ProjectionSpec,
    pub coord: CellCoord,
    pub master_seed: u64,
}

pub fn run_cell(instance: &Instance, beta0: &[f64], cell: &CellRun) -> Result<RunTrace, CellError> {
    let seed = cell.coord.seed(cell.master_seed);
    let a = scheme_assignment(
        cell.spec.kind,
        &instance.data,
        cell.n,
        cell.d,
        rng::derive_seed(seed, rng::tag::ASSIGNMENT, &[]),
    )?;
    let stragglers = StragglerModel {
        p: cell.p,
        nu: cell.nu,
        n: cell.n,
        seed: rng::derive_seed(seed, rng::tag::STRAGGLER, &[]),
    };
    let mut trace = engine::run_scheme(&Simulation {
        spec: cell.spec,
        data: &instance.data,
        assignment: &a,
        stragglers,
        beta0,
        beta_star: &instance.beta_star,
        iterations: cell.iterations,
        projection: cell.projection,
    })?;
    trace.run = cell.coord.run;
    Ok(trace)
}

/// Zero vector of the instance's dimension, the default starting point.
pub fn zero_start(instance: &Instance) -> Vec<f64> {
    vec![0.0; instance.data.dim()]
}
