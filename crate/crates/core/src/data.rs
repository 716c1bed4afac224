//! Regression datasets `A = [X | y]` and the synthetic generator.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{self, Matrix, NumericsError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dataset needs at least one row and one column (got {m}x{ell})")]
    EmptyShape { m: usize, ell: usize },
    #[error("{label} must be {requirement} (got {value})")]
    InvalidParameter {
        label: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("coefficient range [{low}, {high}] is empty")]
    EmptyCoefficientRange { low: i64, high: i64 },
    #[error("label vector has {labels} entries but X has {rows} rows")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("planted model has {len} entries but X has {cols} columns")]
    PlantedMismatch { cols: usize, len: usize },
    #[error("non-finite label at row {row}")]
    NonFiniteLabel { row: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    beta_bar: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, beta_bar: Option<Vec<f64>>) -> Result<Self, DataError> {
        if y.len() != x.rows() {
            return Err(DataError::LabelMismatch {
                rows: x.rows(),
                labels: y.len(),
            });
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteLabel { row });
        }
        if let Some(b) = &beta_bar {
            if b.len() != x.cols() {
                return Err(DataError::PlantedMismatch {
                    cols: x.cols(),
                    len: b.len(),
                });
            }
        }
        Ok(Self { x, y, beta_bar })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn beta_bar(&self) -> Option<&[f64]> {
        self.beta_bar.as_deref()
    }

    /// Number of data rows `m`.
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Number of features `ℓ`.
    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}

/// Parameters of the synthetic regression problem: rows `x_i ~ N(0, feature_std² I)`,
/// planted integer coefficients uniform on `[coeff_low, coeff_high]`, and labels
/// `y_i ~ N(⟨x_i, β̄⟩, label_noise_std²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub m: usize,
    pub ell: usize,
    pub feature_std: f64,
    pub label_noise_std: f64,
    pub coeff_low: i64,
    pub coeff_high: i64,
    /// Rescale every generated row to unit ℓ2 norm before labelling.
    pub unit_rows: bool,
    pub seed: u64,
}

impl SynthConfig {
    /// The 1000 x 100 recipe used for the convergence experiments.
    pub fn reference_recipe(seed: u64) -> Self {
        Self {
            m: 1000,
            ell: 100,
            feature_std: 100.0,
            label_noise_std: 1.0,
            coeff_low: 1,
            coeff_high: 10,
            unit_rows: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.m == 0 || self.ell == 0 {
            return Err(DataError::EmptyShape {
                m: self.m,
                ell: self.ell,
            });
        }
        if !(self.feature_std > 0.0 && self.feature_std.is_finite()) {
            return Err(DataError::InvalidParameter {
                label: "feature_std",
                requirement: "finite and > 0",
                value: self.feature_std,
            });
        }
        if !(self.label_noise_std >= 0.0 && self.label_noise_std.is_finite()) {
            return Err(DataError::InvalidParameter {
                label: "label_noise_std",
                requirement: "finite and >= 0",
                value: self.label_noise_std,
            });
        }
        if self.coeff_low > self.coeff_high {
            return Err(DataError::EmptyCoefficientRange {
                low: self.coeff_low,
                high: self.coeff_high,
            });
        }
        Ok(())
    }
}

/// Deterministic in `cfg.seed`. Features, coefficients and label noise are drawn from
/// three separate derived streams.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset, DataError> {
    cfg.validate()?;
    let mut features = rng::stream(rng::derive_seed(cfg.seed, rng::tag::DATA, &[0]));
    let mut coeffs = rng::stream(rng::derive_seed(cfg.seed, rng::tag::DATA, &[1]));
    let mut noise = rng::stream(rng::derive_seed(cfg.seed, rng::tag::DATA, &[2]));

    let mut data = Vec::with_capacity(cfg.m * cfg.ell);
    for _ in 0..cfg.m {
        let start = data.len();
        for _ in 0..cfg.ell {
            let z: f64 = StandardNormal.sample(&mut features);
            data.push(cfg.feature_std * z);
        }
        if cfg.unit_rows {
            let row = &mut data[start..];
            let n = linalg::norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
    let x = Matrix::from_row_major(cfg.m, cfg.ell, data)?;
    let beta_bar: Vec<f64> = (0..cfg.ell)
        .map(|_| coeffs.random_range(cfg.coeff_low..=cfg.coeff_high) as f64)
        .collect();
    let y = x
        .row_iter()
        .map(|r| {
            let z: f64 = StandardNormal.sample(&mut noise);
            linalg::dot(r, &beta_bar) + cfg.label_noise_std * z
        })
        .collect();
    Dataset::new(x, y, Some(beta_bar))
}
