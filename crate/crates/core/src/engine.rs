//! Gradient aggregation for every scheme and the simulated master loop.
//!
//! All aggregators estimate the *mean* gradient `(1/m) Σ_i ∇L_i(β)` of the loss
//! `L_i(β) = ½(⟨x_i, β⟩ − y_i)²`, so a single step-size schedule can be shared by
//! every scheme. The step size is applied by the master.
//!
//! Each scheme reduces to per-row coefficients `c_i` for a given straggler set, with
//! `ĝ = (1/m) Σ_i c_i ∇L_i(β)`. Writing `Z_i` for the number of surviving workers that
//! hold row `i`:
//!
//! | scheme              | `c_i`                                   |
//! |---------------------|-----------------------------------------|
//! | SGC / BGC           | `Z_i / (d_i (1 − p))`                   |
//! | Ignore-Stragglers   | `Z_i / (1 − p)`                         |
//! | ErasureHead         | surviving distinct blocks holding `i`   |
//! | SGC-Send-All        | `1[Z_i > 0] / (1 − p^{d_i})`            |
//! | exact GD            | `1`                                     |

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::assignment::{Assignment, DegreeProfile};
use crate::data::Dataset;
use crate::linalg::{self, axpy, dot};
use crate::straggler::{StragglerModel, WorkerMask};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("iterate became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("{what}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("assumed straggle probability {p} must lie in [0, 1)")]
    InvalidProbability { p: f64 },
    #[error("assignment has {assignment} workers but the straggler model has {model}")]
    WorkerCountMismatch { assignment: usize, model: usize },
    #[error("assignment covers {assignment} rows but the dataset has {data}")]
    RowCountMismatch { assignment: usize, data: usize },
    #[error("step size {value} at iteration {t} is not positive and finite")]
    InvalidStep { t: usize, value: f64 },
    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    Sgc,
    Bgc,
    ErasureHead,
    IgnoreStragglers,
    SgcSendAll,
    ExactGd,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::Sgc,
        SchemeKind::Bgc,
        SchemeKind::ErasureHead,
        SchemeKind::IgnoreStragglers,
        SchemeKind::SgcSendAll,
        SchemeKind::ExactGd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Sgc => "sgc",
            SchemeKind::Bgc => "bgc",
            SchemeKind::ErasureHead => "erasurehead",
            SchemeKind::IgnoreStragglers => "ignore_stragglers",
            SchemeKind::SgcSendAll => "sgc_send_all",
            SchemeKind::ExactGd => "exact_gd",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        Ok(match norm.as_str() {
            "sgc" => SchemeKind::Sgc,
            "bgc" => SchemeKind::Bgc,
            "erasurehead" | "fr" => SchemeKind::ErasureHead,
            "ignorestragglers" | "ignore" | "ignorestragglerssgd" => SchemeKind::IgnoreStragglers,
            "sgcsendall" | "sendall" => SchemeKind::SgcSendAll,
            "exactgd" | "gd" => SchemeKind::ExactGd,
            _ => return Err(EngineError::UnknownScheme(s.into())),
        })
    }
}

/// Step-size schedules `γ_t`, `t ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `scale · ln(10^log_base_exponent) / t^power / normalizer`.
    Empirical {
        scale: f64,
        power: f64,
        log_base_exponent: f64,
        normalizer: f64,
    },
    /// `(1/spectral_norm) · min{1/2, ln(1/ε²)/t}`.
    TheoremL2 { epsilon: f64, spectral_norm: f64 },
    /// `1/(λ t)`.
    InverseLambdaT { lambda: f64 },
}

impl StepSchedule {
    /// `7 ln(10^100) / t^0.7`, divided by `normalizer`.
    pub fn reference_empirical(normalizer: f64) -> Self {
        StepSchedule::Empirical {
            scale: 7.0,
            power: 0.7,
            log_base_exponent: 100.0,
            normalizer,
        }
    }

    pub fn step_size(&self, t: usize) -> f64 {
        let t = t.max(1) as f64;
        match *self {
            StepSchedule::Empirical {
                scale,
                power,
                log_base_exponent,
                normalizer,
            } => scale * log_base_exponent * core::f64::consts::LN_10 / libm::pow(t, power) / normalizer,
            StepSchedule::TheoremL2 {
                epsilon,
                spectral_norm,
            } => {
                let l = libm::log(1.0 / (epsilon * epsilon));
                (0.5f64).min(l / t) / spectral_norm
            }
            StepSchedule::InverseLambdaT { lambda } => 1.0 / (lambda * t),
        }
    }
}

/// Free-function form of [`StepSchedule::step_size`].
pub fn step_size(schedule: &StepSchedule, t: usize) -> f64 {
    schedule.step_size(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub schedule: StepSchedule,
    /// Straggle probability used inside the estimator weights; `None` uses the
    /// straggler model's own `p`.
    pub p_assumed: Option<f64>,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, schedule: StepSchedule) -> Self {
        Self {
            kind,
            schedule,
            p_assumed: None,
        }
    }
}

/// Euclidean-ball constraint `‖β‖₂ ≤ radius`; `None` is unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectionSpec {
    pub radius: Option<f64>,
}

impl ProjectionSpec {
    pub fn ball(radius: f64) -> Self {
        Self {
            radius: Some(radius),
        }
    }

    pub fn apply(&self, beta: &mut [f64]) {
        if let Some(r) = self.radius {
            let n = linalg::norm(beta);
            if n > r {
                let s = r / n;
                beta.iter_mut().for_each(|b| *b *= s);
            }
        }
    }
}

pub fn project_ball(beta: &[f64], spec: &ProjectionSpec) -> Vec<f64> {
    let mut out = beta.to_vec();
    spec.apply(&mut out);
    out
}

/// `∇L_i(β) = (⟨x_i, β⟩ − y_i) x_i`.
pub fn row_gradient(x_i: &[f64], y_i: f64, beta: &[f64]) -> Vec<f64> {
    let r = dot(x_i, beta) - y_i;
    x_i.iter().map(|v| r * v).collect()
}

/// `Σ_i ∇L_i(β) = Xᵀ(Xβ − y)`.
pub fn full_gradient(data: &Dataset, beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; data.dim()];
    for (x_i, &y_i) in data.x().row_iter().zip(data.y()) {
        axpy(dot(x_i, beta) - y_i, x_i, &mut g);
    }
    g
}

/// Worker message `Σ_{i∈S_j} ∇L_i(β) / (d_i (1 − p))`.
pub fn worker_sum(
    set: &[usize],
    data: &Dataset,
    beta: &[f64],
    degrees: &DegreeProfile,
    p_assumed: f64,
) -> Vec<f64> {
    let mut f = vec![0.0; data.dim()];
    for &i in set {
        let x_i = data.x().row(i);
        let w = 1.0 / (degrees.degrees()[i] as f64 * (1.0 - p_assumed));
        axpy(w * (dot(x_i, beta) - data.y()[i]), x_i, &mut f);
    }
    f
}

fn partial_sum(rows: impl Iterator<Item = usize>, data: &Dataset, beta: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; data.dim()];
    for i in rows {
        let x_i = data.x().row(i);
        axpy(dot(x_i, beta) - data.y()[i], x_i, &mut f);
    }
    f
}

/// Surviving workers whose row set differs from every earlier surviving worker's.
fn distinct_survivors<'a>(
    a: &'a Assignment,
    survivors: &'a WorkerMask,
) -> impl Iterator<Item = usize> + 'a {
    survivors.survivors().filter(move |&j| {
        !survivors
            .survivors()
            .take_while(|&k| k < j)
            .any(|k| a.worker_set(k) == a.worker_set(j))
    })
}

/// Master-side gradient estimate from the messages of the surviving workers.
///
/// This is the message-level reference; [`run_scheme`] uses the equivalent per-row
/// coefficient form.
pub fn aggregate(
    kind: SchemeKind,
    a: &Assignment,
    survivors: &WorkerMask,
    data: &Dataset,
    beta: &[f64],
    p_assumed: f64,
) -> Vec<f64> {
    let m = data.len() as f64;
    let mut g = vec![0.0; data.dim()];
    match kind {
        SchemeKind::Sgc | SchemeKind::Bgc => {
            for j in survivors.survivors() {
                let f = worker_sum(a.worker_set(j), data, beta, a.profile(), p_assumed);
                axpy(1.0, &f, &mut g);
            }
            g.iter_mut().for_each(|v| *v /= m);
        }
        SchemeKind::IgnoreStragglers => {
            for j in survivors.survivors() {
                let f = partial_sum(a.worker_set(j).iter().copied(), data, beta);
                axpy(1.0, &f, &mut g);
            }
            g.iter_mut().for_each(|v| *v /= m * (1.0 - p_assumed));
        }
        SchemeKind::ErasureHead => {
            for j in distinct_survivors(a, survivors) {
                let f = partial_sum(a.worker_set(j).iter().copied(), data, beta);
                axpy(1.0, &f, &mut g);
            }
            g.iter_mut().for_each(|v| *v /= m);
        }
        SchemeKind::SgcSendAll => {
            let mut received = vec![false; data.len()];
            for j in survivors.survivors() {
                for &i in a.worker_set(j) {
                    received[i] = true;
                }
            }
            for (i, _) in received.iter().enumerate().filter(|(_, &r)| r) {
                let x_i = data.x().row(i);
                let q = 1.0 - libm::pow(p_assumed, a.degree(i) as f64);
                axpy((dot(x_i, beta) - data.y()[i]) / q, x_i, &mut g);
            }
            g.iter_mut().for_each(|v| *v /= m);
        }
        SchemeKind::ExactGd => {
            g = full_gradient(data, beta);
            g.iter_mut().for_each(|v| *v /= m);
        }
    }
    g
}

/// Per-row coefficients `c_i` with `ĝ = (1/m) Σ c_i ∇L_i`. `holders` is scratch space
/// of length `m`.
pub fn row_coefficients(
    kind: SchemeKind,
    a: &Assignment,
    survivors: &WorkerMask,
    p_assumed: f64,
    holders: &mut [u32],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|c| *c = 0.0);
    if kind == SchemeKind::ExactGd {
        out.iter_mut().for_each(|c| *c = 1.0);
        return;
    }
    if kind == SchemeKind::ErasureHead {
        for j in distinct_survivors(a, survivors) {
            for &i in a.worker_set(j) {
                out[i] += 1.0;
            }
        }
        return;
    }
    holders.iter_mut().for_each(|z| *z = 0);
    for j in survivors.survivors() {
        for &i in a.worker_set(j) {
            holders[i] += 1;
        }
    }
    let keep = 1.0 - p_assumed;
    for (i, (c, &z)) in out.iter_mut().zip(holders.iter()).enumerate() {
        if z == 0 {
            continue;
        }
        let d = a.degree(i) as f64;
        *c = match kind {
            SchemeKind::Sgc | SchemeKind::Bgc => z as f64 / (d * keep),
            SchemeKind::IgnoreStragglers => z as f64 / keep,
            SchemeKind::SgcSendAll => 1.0 / (1.0 - libm::pow(p_assumed, d)),
            SchemeKind::ErasureHead | SchemeKind::ExactGd => unreachable!(),
        };
    }
}

/// `(1/m) Σ c_i ∇L_i(β)` into `grad`.
fn weighted_mean_gradient(data: &Dataset, beta: &[f64], coeffs: &[f64], grad: &mut [f64]) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    for (i, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            let x_i = data.x().row(i);
            axpy(c * (dot(x_i, beta) - data.y()[i]), x_i, grad);
        }
    }
    let inv_m = 1.0 / data.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv_m);
}

/// Closed-form expectation of [`aggregate`] over iid stragglers for a fixed assignment.
pub fn expected_estimate(
    kind: SchemeKind,
    a: &Assignment,
    p: f64,
    data: &Dataset,
    beta: &[f64],
) -> Vec<f64> {
    let m = data.len();
    let mut coeffs = vec![0.0; m];
    match kind {
        SchemeKind::Sgc | SchemeKind::Bgc | SchemeKind::SgcSendAll | SchemeKind::ExactGd => {
            coeffs.iter_mut().for_each(|c| *c = 1.0);
        }
        SchemeKind::IgnoreStragglers => {
            for (i, c) in coeffs.iter_mut().enumerate() {
                *c = a.degree(i) as f64;
            }
        }
        SchemeKind::ErasureHead => {
            // Each group of workers sharing one row set contributes once if any member
            // survives.
            let n = a.workers();
            let mut seen = vec![false; n];
            for j in 0..n {
                if seen[j] {
                    continue;
                }
                let set = a.worker_set(j);
                let mut copies = 0;
                for k in j..n {
                    if a.worker_set(k) == set {
                        seen[k] = true;
                        copies += 1;
                    }
                }
                let alive = 1.0 - libm::pow(p, copies as f64);
                for &i in set {
                    coeffs[i] += alive;
                }
            }
        }
    }
    let mut g = vec![0.0; data.dim()];
    weighted_mean_gradient(data, beta, &coeffs, &mut g);
    g
}

/// `E[Z_{i1} Z_{i2}]` under iid stragglers, where `Z_i` counts surviving holders of row
/// `i`.
pub fn second_moment_oracle(a: &Assignment, p: f64, i1: usize, i2: usize) -> f64 {
    let q = 1.0 - p;
    let (d1, d2) = (a.degree(i1) as f64, a.degree(i2) as f64);
    let shared = if i1 == i2 {
        d1
    } else {
        a.pairwise_overlap(i1, i2) as f64
    };
    shared * p * q + d1 * d2 * q * q
}

/// Error trajectory `‖β_t − β*‖₂`, `t = 0..=T`, of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub scheme: SchemeKind,
    pub p: f64,
    pub nu: usize,
    pub run: usize,
    pub errors: Vec<f64>,
}

impl RunTrace {
    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(f64::NAN)
    }
}

/// Everything one simulated run needs.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pub spec: SchemeSpec,
    pub data: &'a Dataset,
    pub assignment: &'a Assignment,
    pub stragglers: StragglerModel,
    pub beta0: &'a [f64],
    pub beta_star: &'a [f64],
    pub iterations: usize,
    pub projection: ProjectionSpec,
}

impl Simulation<'_> {
    fn validate(&self) -> Result<f64, EngineError> {
        let p = self.spec.p_assumed.unwrap_or(self.stragglers.p);
        if !(0.0..1.0).contains(&p) {
            return Err(EngineError::InvalidProbability { p });
        }
        if self.assignment.workers() != self.stragglers.n {
            return Err(EngineError::WorkerCountMismatch {
                assignment: self.assignment.workers(),
                model: self.stragglers.n,
            });
        }
        if self.assignment.rows() != self.data.len() {
            return Err(EngineError::RowCountMismatch {
                assignment: self.assignment.rows(),
                data: self.data.len(),
            });
        }
        for (what, v) in [("beta0", self.beta0), ("beta_star", self.beta_star)] {
            if v.len() != self.data.dim() {
                return Err(EngineError::DimensionMismatch {
                    what,
                    expected: self.data.dim(),
                    actual: v.len(),
                });
            }
        }
        Ok(p)
    }
}

/// Runs `β_{t+1} = Π(β_t − γ_t ĝ_t)` for `t = 1..=T`, where round `t` sees the straggler
/// set `sample_round(t − 1)`, and records `‖β_t − β*‖₂` for `t = 0..=T`.
pub fn run_scheme(sim: &Simulation<'_>) -> Result<RunTrace, EngineError> {
    let p = sim.validate()?;
    let m = sim.data.len();
    let mut beta = sim.beta0.to_vec();
    sim.projection.apply(&mut beta);
    let mut grad = vec![0.0; sim.data.dim()];
    let mut coeffs = vec![0.0; m];
    let mut holders = vec![0u32; m];
    let mut errors = Vec::with_capacity(sim.iterations + 1);
    errors.push(linalg::distance(&beta, sim.beta_star));

    for t in 1..=sim.iterations {
        let mask = sim.stragglers.sample_round(t - 1);
        row_coefficients(sim.spec.kind, sim.assignment, &mask, p, &mut holders, &mut coeffs);
        weighted_mean_gradient(sim.data, &beta, &coeffs, &mut grad);
        let gamma = sim.spec.schedule.step_size(t);
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(EngineError::InvalidStep { t, value: gamma });
        }
        axpy(-gamma, &grad, &mut beta);
        sim.projection.apply(&mut beta);
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(EngineError::Diverged { iteration: t });
        }
        errors.push(linalg::distance(&beta, sim.beta_star));
    }
    Ok(RunTrace {
        scheme: sim.spec.kind,
        p: sim.stragglers.p,
        nu: sim.stragglers.nu,
        run: 0,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{assign_fractional_repetition, assign_partition, assign_replicated};
    use crate::linalg::Matrix;
    use rand::Rng;

    fn random_dataset(m: usize, ell: usize, seed: u64) -> Dataset {
        let mut rng = crate::rng::stream(seed);
        let data = (0..m * ell).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Matrix::from_row_major(m, ell, data).unwrap();
        let y = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        Dataset::new(x, y, None).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        linalg::distance(a, b) / linalg::norm(b).max(1e-300)
    }

    fn loss(x: &[f64], y: f64, beta: &[f64]) -> f64 {
        let r = dot(x, beta) - y;
        0.5 * r * r
    }

    #[test]
    fn row_gradient_cases() {
        assert_eq!(row_gradient(&[1.0, 0.0], 0.0, &[2.0, 0.0]), vec![2.0, 0.0]);
        let g = row_gradient(&[1.0, 2.0], 5.0, &[1.0, 2.0]);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn row_gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream(31);
        let h = 1e-6;
        for _ in 0..100 {
            let ell = rng.random_range(1..6);
            let x: Vec<f64> = (0..ell).map(|_| rng.random_range(-2.0..2.0)).collect();
            let beta: Vec<f64> = (0..ell).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = rng.random_range(-2.0..2.0);
            let g = row_gradient(&x, y, &beta);
            let fd: Vec<f64> = (0..ell)
                .map(|k| {
                    let mut up = beta.clone();
                    let mut dn = beta.clone();
                    up[k] += h;
                    dn[k] -= h;
                    (loss(&x, y, &up) - loss(&x, y, &dn)) / (2.0 * h)
                })
                .collect();
            let scale = linalg::norm(&g).max(1e-3);
            assert!(linalg::distance(&g, &fd) / scale <= 1e-4);
        }
    }

    #[test]
    fn full_gradient_matches_matrix_formula() {
        let d = random_dataset(10, 3, 8);
        let beta = [0.3, -1.0, 2.0];
        let direct = d.x().tr_mul_vec(&linalg::sub(&d.x().mul_vec(&beta), d.y()));
        assert!(rel_err(&full_gradient(&d, &beta), &direct) <= 1e-12);

        let one = random_dataset(1, 3, 9);
        assert_eq!(
            full_gradient(&one, &beta),
            row_gradient(one.x().row(0), one.y()[0], &beta)
        );

        let star = linalg::least_squares(d.x(), d.y(), 1e-13).unwrap();
        assert!(linalg::norm(&full_gradient(&d, &star)) <= 1e-11);
    }

    #[test]
    fn worker_sum_weights() {
        let d = random_dataset(3, 2, 4);
        let beta = [0.5, -0.5];
        let prof = DegreeProfile::from_degrees(vec![1, 2, 1], 2).unwrap();
        assert_eq!(worker_sum(&[], &d, &beta, &prof, 0.3), vec![0.0, 0.0]);
        let g0 = row_gradient(d.x().row(0), d.y()[0], &beta);
        assert_eq!(worker_sum(&[0], &d, &beta, &prof, 0.0), g0);
        let g1 = row_gradient(d.x().row(1), d.y()[1], &beta);
        assert!(rel_err(&worker_sum(&[1], &d, &beta, &prof, 0.5), &g1) < 1e-15);
    }

    fn natural_assignment(kind: SchemeKind, m: usize, n: usize, seed: u64) -> Assignment {
        match kind {
            SchemeKind::Sgc | SchemeKind::SgcSendAll => {
                let mut rng = crate::rng::stream(seed);
                let degrees = (0..m).map(|_| rng.random_range(1..=3)).collect();
                assign_replicated(&DegreeProfile::from_degrees(degrees, n).unwrap(), n, seed)
                    .unwrap()
            }
            SchemeKind::Bgc => {
                assign_replicated(&DegreeProfile::constant(m, 2, n).unwrap(), n, seed).unwrap()
            }
            SchemeKind::ErasureHead => assign_fractional_repetition(m, n, 2).unwrap(),
            SchemeKind::IgnoreStragglers | SchemeKind::ExactGd => assign_partition(m, n).unwrap(),
        }
    }

    #[test]
    fn no_stragglers_gives_mean_gradient() {
        let d = random_dataset(12, 3, 1);
        let beta = [1.0, 0.5, -0.25];
        let mut exact = full_gradient(&d, &beta);
        exact.iter_mut().for_each(|v| *v /= 12.0);
        for kind in SchemeKind::ALL {
            let a = natural_assignment(kind, 12, 4, 3);
            let g = aggregate(kind, &a, &WorkerMask::none(4), &d, &beta, 0.0);
            assert!(rel_err(&g, &exact) <= 1e-12, "{kind}");
        }
    }

    #[test]
    fn sgc_single_survivor_hand_case() {
        let d = random_dataset(2, 2, 6);
        let beta = [0.2, 0.7];
        let a = assign_partition(2, 2).unwrap();
        let mask = WorkerMask::from_stragglers(2, &[1]);
        let g = aggregate(SchemeKind::Sgc, &a, &mask, &d, &beta, 0.5);
        let g1 = row_gradient(d.x().row(0), d.y()[0], &beta);
        assert!(rel_err(&g, &g1) < 1e-15);
    }

    #[test]
    fn coefficient_form_matches_message_form() {
        let d = random_dataset(15, 4, 2);
        let beta = [0.1, -0.4, 0.9, 1.3];
        for kind in SchemeKind::ALL {
            let a = natural_assignment(kind, 15, 6, 11);
            for bits in 0..64u64 {
                let mask = WorkerMask::from_bits(6, bits);
                let reference = aggregate(kind, &a, &mask, &d, &beta, 0.35);
                let mut coeffs = vec![0.0; 15];
                let mut holders = vec![0; 15];
                row_coefficients(kind, &a, &mask, 0.35, &mut holders, &mut coeffs);
                let mut g = vec![0.0; 4];
                weighted_mean_gradient(&d, &beta, &coeffs, &mut g);
                let err = linalg::distance(&g, &reference);
                assert!(err <= 1e-12 * linalg::norm(&reference).max(1.0), "{kind} {bits}");
            }
        }
    }

    /// Enumerates all 2^n straggler patterns with their Bernoulli weights.
    fn enumerate_mean(
        kind: SchemeKind,
        a: &Assignment,
        p: f64,
        d: &Dataset,
        beta: &[f64],
    ) -> Vec<f64> {
        let n = a.workers();
        let mut acc = vec![0.0; d.dim()];
        for bits in 0..(1u64 << n) {
            let k = bits.count_ones() as i32;
            let w = libm::pow(p, k as f64) * libm::pow(1.0 - p, (n as i32 - k) as f64);
            let g = aggregate(kind, a, &WorkerMask::from_bits(n, bits), d, beta, p);
            axpy(w, &g, &mut acc);
        }
        acc
    }

    #[test]
    fn expected_estimate_matches_enumeration() {
        let d = random_dataset(9, 3, 12);
        let beta = [0.4, -0.2, 1.1];
        let mut mean = full_gradient(&d, &beta);
        mean.iter_mut().for_each(|v| *v /= 9.0);
        for kind in SchemeKind::ALL {
            for &p in &[0.0, 0.3, 0.8] {
                let a = natural_assignment(kind, 9, 6, 5);
                let closed = expected_estimate(kind, &a, p, &d, &beta);
                let brute = enumerate_mean(kind, &a, p, &d, &beta);
                assert!(rel_err(&closed, &brute) <= 1e-12, "{kind} p={p}");
                if matches!(kind, SchemeKind::Sgc | SchemeKind::Bgc | SchemeKind::SgcSendAll)
                    || p == 0.0
                {
                    assert!(rel_err(&closed, &mean) <= 1e-12, "{kind} p={p}");
                }
            }
        }
        let part = assign_partition(9, 3).unwrap();
        let ig = expected_estimate(SchemeKind::IgnoreStragglers, &part, 0.6, &d, &beta);
        assert!(rel_err(&ig, &mean) <= 1e-12);
    }

    #[test]
    fn second_moment_matches_enumeration() {
        let prof = DegreeProfile::from_degrees(vec![1, 2, 3, 4, 2], 4).unwrap();
        let a = assign_replicated(&prof, 4, 21).unwrap();
        let p = 0.37;
        for i1 in 0..5 {
            for i2 in 0..5 {
                let mut brute = 0.0;
                for bits in 0..16u64 {
                    let mask = WorkerMask::from_bits(4, bits);
                    let k = bits.count_ones() as f64;
                    let w = libm::pow(p, k) * libm::pow(1.0 - p, 4.0 - k);
                    let z = |i: usize| a.holders(i).iter().filter(|&&j| mask.survives(j)).count();
                    brute += w * (z(i1) * z(i2)) as f64;
                }
                let oracle = second_moment_oracle(&a, p, i1, i2);
                assert!((brute - oracle).abs() <= 1e-12, "{i1} {i2}");
            }
        }
        assert_eq!(second_moment_oracle(&a, 0.0, 1, 2), 6.0);
        assert_eq!(second_moment_oracle(&a, 0.0, 3, 3), 16.0);
        assert_eq!(second_moment_oracle(&a, 1.0, 1, 2), 0.0);
    }

    #[test]
    fn step_size_cases() {
        let e = StepSchedule::reference_empirical(1.0);
        assert!((e.step_size(1) - 700.0 * core::f64::consts::LN_10).abs() < 1e-9);
        assert!((e.step_size(1) - 1611.809565).abs() < 1e-5);
        let th = StepSchedule::TheoremL2 {
            epsilon: libm::exp(-1.0),
            spectral_norm: 2.0,
        };
        assert!((th.step_size(1) - 0.25).abs() < 1e-15);
        assert!((th.step_size(8) - 0.125).abs() < 1e-15);
        let inv = StepSchedule::InverseLambdaT { lambda: 4.0 };
        assert!((step_size(&inv, 5) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn projection_cases() {
        let unconstrained = ProjectionSpec::default();
        assert_eq!(project_ball(&[30.0, 40.0], &unconstrained), vec![30.0, 40.0]);
        assert_eq!(project_ball(&[3.0, 4.0], &ProjectionSpec::ball(5.0)), vec![3.0, 4.0]);
        let p = project_ball(&[3.0, 4.0], &ProjectionSpec::ball(1.0));
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        let mut rng = crate::rng::stream(3);
        for _ in 0..100 {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
            let r = rng.random_range(0.1..2.0);
            let out = project_ball(&v, &ProjectionSpec::ball(r));
            if linalg::norm(&v) > r {
                assert!((linalg::norm(&out) - r).abs() <= 1e-12);
            }
        }
    }

    fn small_problem() -> (Dataset, Vec<f64>) {
        let d = random_dataset(40, 3, 77);
        let star = linalg::least_squares(d.x(), d.y(), 1e-13).unwrap();
        (d, star)
    }

    #[test]
    fn zero_iterations_records_initial_error() {
        let (d, star) = small_problem();
        let a = assign_partition(40, 4).unwrap();
        let beta0 = vec![0.0; 3];
        let sim = Simulation {
            spec: SchemeSpec::new(SchemeKind::Sgc, StepSchedule::InverseLambdaT { lambda: 1.0 }),
            data: &d,
            assignment: &a,
            stragglers: StragglerModel::iid(0.2, 4, 1),
            beta0: &beta0,
            beta_star: &star,
            iterations: 0,
            projection: ProjectionSpec::default(),
        };
        let tr = run_scheme(&sim).unwrap();
        assert_eq!(tr.errors, vec![linalg::norm(&star)]);
    }

    #[test]
    fn p_zero_collapses_every_scheme_to_gd() {
        let (d, star) = small_problem();
        let beta0 = vec![0.0; 3];
        let sched = StepSchedule::Empirical {
            scale: 0.5,
            power: 0.5,
            log_base_exponent: 1.0,
            normalizer: 1.0,
        };
        let traces: Vec<RunTrace> = SchemeKind::ALL
            .iter()
            .map(|&kind| {
                let a = natural_assignment(kind, 40, 4, 2);
                run_scheme(&Simulation {
                    spec: SchemeSpec::new(kind, sched),
                    data: &d,
                    assignment: &a,
                    stragglers: StragglerModel::iid(0.0, 4, 9),
                    beta0: &beta0,
                    beta_star: &star,
                    iterations: 100,
                    projection: ProjectionSpec::default(),
                })
                .unwrap()
            })
            .collect();
        for tr in &traces[1..] {
            for (a, b) in tr.errors.iter().zip(&traces[0].errors) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
        assert!(traces[0].final_error() < traces[0].errors[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let (d, star) = small_problem();
        let a = assign_partition(40, 4).unwrap();
        let beta0 = vec![0.0; 3];
        let sim = Simulation {
            spec: SchemeSpec::new(SchemeKind::ExactGd, StepSchedule::reference_empirical(1.0)),
            data: &d,
            assignment: &a,
            stragglers: StragglerModel::iid(0.0, 4, 1),
            beta0: &beta0,
            beta_star: &star,
            iterations: 5000,
            projection: ProjectionSpec::default(),
        };
        assert!(matches!(run_scheme(&sim), Err(EngineError::Diverged { .. })));
    }

    #[test]
    fn run_validates_inputs() {
        let (d, star) = small_problem();
        let a = assign_partition(40, 4).unwrap();
        let beta0 = vec![0.0; 3];
        let mut sim = Simulation {
            spec: SchemeSpec::new(SchemeKind::Sgc, StepSchedule::InverseLambdaT { lambda: 1.0 }),
            data: &d,
            assignment: &a,
            stragglers: StragglerModel::iid(1.0, 4, 1),
            beta0: &beta0,
            beta_star: &star,
            iterations: 3,
            projection: ProjectionSpec::default(),
        };
        assert_eq!(run_scheme(&sim), Err(EngineError::InvalidProbability { p: 1.0 }));
        sim.stragglers = StragglerModel::iid(0.1, 5, 1);
        assert!(matches!(
            run_scheme(&sim),
            Err(EngineError::WorkerCountMismatch { .. })
        ));
    }

    #[test]
    fn update_is_linear_in_step() {
        let (d, _) = small_problem();
        let a = natural_assignment(SchemeKind::Sgc, 40, 4, 3);
        let beta = [0.3, 0.1, -0.7];
        let mask = WorkerMask::from_stragglers(4, &[2]);
        let g = aggregate(SchemeKind::Sgc, &a, &mask, &d, &beta, 0.25);
        let step = |gamma: f64| -> Vec<f64> {
            let mut b = beta.to_vec();
            axpy(-gamma, &g, &mut b);
            linalg::sub(&beta, &b)
        };
        let (one, two) = (step(0.01), step(0.02));
        for (a1, a2) in one.iter().zip(&two) {
            assert!((2.0 * a1 - a2).abs() <= 1e-15 * a2.abs().max(1.0));
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for kind in SchemeKind::ALL {
            assert_eq!(kind.as_str().parse::<SchemeKind>().unwrap(), kind);
        }
        assert_eq!("Ignore-Stragglers".parse::<SchemeKind>().unwrap(), SchemeKind::IgnoreStragglers);
        assert!("ldpc".parse::<SchemeKind>().is_err());
    }
}
