//! Convergence bounds for SGC.
//!
//! [`thm3_bound`] is the ℓ2-loss guarantee (exponential phase plus a `1/(dT)` noise
//! term); [`thm4_bound`] is the `O(1/T)` guarantee for projected SGC on a λ-strongly
//! convex loss with bounded per-row gradients.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("hypothesis violated: {0}")]
    Hypothesis(&'static str),
    #[error("invalid input: {0}")]
    Invalid(&'static str),
}

/// Instance constants that enter the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub iterations: usize,
    pub p: f64,
    /// Average redundancy `d`.
    pub d: f64,
    pub mu: f64,
    /// `‖Xβ* − y‖₂²`.
    pub residual_norm_sq: f64,
    /// `‖XᵀX‖₂`.
    pub spectral_norm: f64,
    /// `‖β₀ − β*‖₂²`.
    pub beta0_err_sq: f64,
    /// Strong-convexity constant of the summed loss.
    pub lambda: f64,
    /// Bound on `‖∇L_i(β)‖₂²` over the feasible set.
    pub c_sq: f64,
    pub n: usize,
    pub m: usize,
    pub d_min: usize,
}

/// `ε²‖β₀ − β*‖² + (2/(T d)) · ln²(1/ε²) · (p/(1−p)) · μ · ‖r‖²/‖XᵀX‖`.
///
/// Requires `T ≥ 2 ln(1/ε²)`, `d ≥ 8μp/(1−p)` and `n ≥ 8p/(1−p)`.
pub fn thm3_bound(b: &BoundInputs) -> Result<f64, BoundError> {
    if !(b.epsilon > 0.0 && b.epsilon < 1.0) {
        return Err(BoundError::Invalid("epsilon must lie in (0, 1)"));
    }
    if !(0.0..1.0).contains(&b.p) {
        return Err(BoundError::Invalid("p must lie in [0, 1)"));
    }
    if !(b.spectral_norm > 0.0) || !(b.d > 0.0) {
        return Err(BoundError::Invalid("spectral norm and d must be positive"));
    }
    let log_term = libm::log(1.0 / (b.epsilon * b.epsilon));
    let odds = b.p / (1.0 - b.p);
    if (b.iterations as f64) < 2.0 * log_term {
        return Err(BoundError::Hypothesis("T >= 2 ln(1/eps^2)"));
    }
    if b.d < 8.0 * b.mu * odds {
        return Err(BoundError::Hypothesis("d >= 8 mu p/(1-p)"));
    }
    if (b.n as f64) < 8.0 * odds {
        return Err(BoundError::Hypothesis("n >= 8 p/(1-p)"));
    }
    let contraction = b.epsilon * b.epsilon * b.beta0_err_sq;
    let noise = 2.0 / (b.iterations as f64 * b.d)
        * log_term
        * log_term
        * odds
        * b.mu
        * (b.residual_norm_sq / b.spectral_norm);
    Ok(contraction + noise)
}

/// `(4/(λ² T)) · m · C² · (p/((1−p) d_min) + (m−1)p/(n(1−p)) + m)`.
pub fn thm4_bound(b: &BoundInputs) -> Result<f64, BoundError> {
    if b.d_min == 0 {
        return Err(BoundError::Invalid("d_min must be >= 1"));
    }
    if !(b.lambda > 0.0) {
        return Err(BoundError::Invalid("lambda must be positive"));
    }
    if b.iterations == 0 {
        return Err(BoundError::Invalid("T must be >= 1"));
    }
    if b.n == 0 || b.m == 0 {
        return Err(BoundError::Invalid("n and m must be >= 1"));
    }
    if !(0.0..1.0).contains(&b.p) {
        return Err(BoundError::Invalid("p must lie in [0, 1)"));
    }
    let odds = b.p / (1.0 - b.p);
    let m = b.m as f64;
    let spread = odds / b.d_min as f64 + (m - 1.0) * odds / b.n as f64 + m;
    Ok(4.0 / (b.lambda * b.lambda * b.iterations as f64) * m * b.c_sq * spread)
}
