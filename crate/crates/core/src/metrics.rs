//! Summary statistics over error traces.

use alloc::vec::Vec;

use thiserror::Error;

/// Default number of trailing iterations averaged into the error floor.
pub const FLOOR_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("window {window} is larger than the trace ({len} values)")]
    WindowTooLarge { window: usize, len: usize },
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Mean of the last `window` values.
pub fn error_floor(errors: &[f64], window: usize) -> Result<f64, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    if window > errors.len() {
        return Err(MetricsError::WindowTooLarge {
            window,
            len: errors.len(),
        });
    }
    Ok(mean(&errors[errors.len() - window..]))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum();
    libm::sqrt(ss / (xs.len() - 1) as f64)
}

/// Ranks starting at 1, ties receiving their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = alloc::vec![0.0; xs.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && xs[order[end]] == xs[order[k]] {
            end += 1;
        }
        let avg = (k + end + 1) as f64 / 2.0;
        for &idx in &order[k..end] {
            out[idx] = avg;
        }
        k = end;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / libm::sqrt(vx * vy))
}
