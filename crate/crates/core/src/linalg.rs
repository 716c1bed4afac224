//! Dense row-major matrices and the spectral quantities the simulator needs:
//! `‖XᵀX‖₂`, `‖X‖_F²`, the incoherence `μ`, `λ_min(XᵀX)` and the least-squares
//! optimum `β*`.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng;

/// Default relative tolerance for power iteration.
pub const POWER_TOL: f64 = 1e-10;
/// Default iteration cap for power iteration.
pub const POWER_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix shape {rows}x{cols} is invalid (both dimensions must be >= 1)")]
    EmptyShape { rows: usize, cols: usize },
    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is identically zero")]
    ZeroMatrix,
    #[error(
        "power iteration did not converge after {iterations} iterations \
         (estimate {estimate}, residual {residual})"
    )]
    NoConvergence {
        iterations: usize,
        estimate: f64,
        residual: f64,
        iterate: Vec<f64>,
    },
    #[error("XᵀX is singular or numerically rank deficient (pivot {pivot} of {dim})")]
    RankDeficient { pivot: usize, dim: usize },
    #[error(
        "least-squares refinement stalled: normal-equation residual {residual} \
         above target {target}"
    )]
    SolveStalled { residual: f64, target: f64 },
}

/// Dense `rows × cols` matrix, row-major, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::EmptyShape { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(NumericsError::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NumericsError::LengthMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in d.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self { rows: n, cols: n, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    /// `X v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        self.row_iter().map(|r| dot(r, v)).collect()
    }

    /// `Xᵀ u`.
    pub fn tr_mul_vec(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &ui) in self.row_iter().zip(u) {
            axpy(ui, r, &mut out);
        }
        out
    }

    /// `XᵀX v` without forming the Gram matrix.
    pub fn gram_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in self.row_iter() {
            axpy(dot(r, v), r, &mut out);
        }
        out
    }

    /// The `cols × cols` Gram matrix `XᵀX`.
    pub fn gram(&self) -> Matrix {
        let l = self.cols;
        let mut g = vec![0.0; l * l];
        for r in self.row_iter() {
            for a in 0..l {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                let dst = &mut g[a * l..a * l + l];
                for b in a..l {
                    dst[b] += ra * r[b];
                }
            }
        }
        for a in 0..l {
            for b in 0..a {
                g[a * l + b] = g[b * l + a];
            }
        }
        Matrix { rows: l, cols: l, data: g }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        norm_sq(self.row(i))
    }

    pub fn frobenius_sq(&self) -> f64 {
        norm_sq(&self.data)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

/// Inner product with four interleaved partial sums (vectorizes; the summation order
/// is fixed, so results are reproducible).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(norm_sq(a))
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// `‖XᵀX‖₂`, `‖X‖_F²` and the incoherence `μ = (‖X‖_F²/m) / ‖XᵀX‖₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    pub spectral_norm: f64,
    pub frobenius_sq: f64,
    pub mu: f64,
}

fn seeded_unit_vector(len: usize) -> Vec<f64> {
    let mut rng = rng::stream(rng::derive_seed(0, rng::tag::POWER_ITERATION, &[len as u64]));
    let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&v);
    scale(&mut v, 1.0 / n);
    v
}

/// Largest eigenvalue of `XᵀX` by power iteration from a fixed seeded start vector.
///
/// Stops when the Rayleigh quotient changes by at most `tol` relative to itself.
pub fn spectral_norm(x: &Matrix, tol: f64, max_iters: usize) -> Result<f64, NumericsError> {
    if x.is_zero() {
        return Err(NumericsError::ZeroMatrix);
    }
    let mut v = seeded_unit_vector(x.cols());
    let mut lambda = 0.0;
    let mut w = x.gram_mul(&v);
    for _ in 0..max_iters {
        let next = dot(&v, &w);
        let wn = norm(&w);
        if wn == 0.0 {
            // start vector landed in the null space; XᵀX ≠ 0 so reseed deterministically
            v = seeded_unit_vector(x.cols() + 1)[..x.cols()].to_vec();
            let n = norm(&v);
            scale(&mut v, 1.0 / n);
            w = x.gram_mul(&v);
            continue;
        }
        if libm::fabs(next - lambda) <= tol * libm::fabs(next) {
            return Ok(next);
        }
        lambda = next;
        v.copy_from_slice(&w);
        scale(&mut v, 1.0 / wn);
        w = x.gram_mul(&v);
    }
    let mut res = w.clone();
    axpy(-lambda, &v, &mut res);
    Err(NumericsError::NoConvergence {
        iterations: max_iters,
        estimate: lambda,
        residual: norm(&res),
        iterate: v,
    })
}

pub fn incoherence(x: &Matrix) -> Result<SpectralSummary, NumericsError> {
    let spectral_norm = spectral_norm(x, POWER_TOL, POWER_MAX_ITERS)?;
    let frobenius_sq = x.frobenius_sq();
    let mut mu = frobenius_sq / (x.rows() as f64 * spectral_norm);
    if mu > 1.0 && mu - 1.0 <= 1e-10 {
        mu = 1.0;
    }
    Ok(SpectralSummary {
        spectral_norm,
        frobenius_sq,
        mu,
    })
}

/// Cholesky factor `L` of a symmetric positive definite matrix, lower triangle row-major.
struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Fails when a pivot falls below `n · ε · max diag`, i.e. the matrix is numerically
    /// singular.
    fn factor(a: &Matrix) -> Result<Self, NumericsError> {
        let n = a.rows();
        let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0, f64::max);
        let floor = n as f64 * f64::EPSILON * max_diag;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j) - norm_sq(&l[j * n..j * n + j]);
            if d <= floor || !d.is_finite() {
                return Err(NumericsError::RankDeficient { pivot: j, dim: n });
            }
            d = libm::sqrt(d);
            l[j * n + j] = d;
            for i in j + 1..n {
                let s = a.get(i, j) - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let s = z[i] - dot(&self.l[i * n..i * n + i], &z[..i]);
            z[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }
}

/// `β* = argmin ‖Xβ − y‖₂` for full-column-rank `X`.
///
/// The normal equations are factored once (which also detects rank deficiency) and
/// the solution is then refined with CGLS iterations until
/// `‖Xᵀ(Xβ − y)‖₂ ≤ tol · ‖Xᵀy‖₂`.
pub fn least_squares(x: &Matrix, y: &[f64], tol: f64) -> Result<Vec<f64>, NumericsError> {
    if y.len() != x.rows() {
        return Err(NumericsError::LengthMismatch {
            expected: x.rows(),
            actual: y.len(),
        });
    }
    let chol = Cholesky::factor(&x.gram())?;
    let xty = x.tr_mul_vec(y);
    let target = tol * norm(&xty);
    let mut beta = chol.solve(&xty);

    // CGLS refinement from the direct solution.
    let mut r = sub(y, &x.mul_vec(&beta));
    let mut s = x.tr_mul_vec(&r);
    let mut gamma = norm_sq(&s);
    let mut p = s.clone();
    let max_iters = 4 * x.cols() + 50;
    for _ in 0..max_iters {
        if libm::sqrt(gamma) <= target {
            return Ok(beta);
        }
        let q = x.mul_vec(&p);
        let qq = norm_sq(&q);
        if qq == 0.0 {
            return Err(NumericsError::RankDeficient {
                pivot: x.cols(),
                dim: x.cols(),
            });
        }
        let alpha = gamma / qq;
        axpy(alpha, &p, &mut beta);
        axpy(-alpha, &q, &mut r);
        s = x.tr_mul_vec(&r);
        let next = norm_sq(&s);
        let ratio = next / gamma;
        gamma = next;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + ratio * *pi;
        }
    }
    if libm::sqrt(gamma) <= target {
        Ok(beta)
    } else {
        Err(NumericsError::SolveStalled {
            residual: libm::sqrt(gamma),
            target,
        })
    }
}

/// Smallest eigenvalue of `XᵀX` by inverse power iteration.
pub fn min_eigenvalue(x: &Matrix, tol: f64, max_iters: usize) -> Result<f64, NumericsError> {
    let gram = x.gram();
    let chol = Cholesky::factor(&gram)?;
    let mut v = seeded_unit_vector(x.cols());
    let mut lambda = f64::INFINITY;
    for _ in 0..max_iters {
        let mut w = chol.solve(&v);
        let wn = norm(&w);
        scale(&mut w, 1.0 / wn);
        let next = dot(&w, &gram.mul_vec(&w));
        v = w;
        if libm::fabs(next - lambda) <= tol * next {
            return Ok(next);
        }
        lambda = next;
    }
    let mut res = gram.mul_vec(&v);
    axpy(-lambda, &v, &mut res);
    Err(NumericsError::NoConvergence {
        iterations: max_iters,
        estimate: lambda,
        residual: norm(&res),
        iterate: v,
    })
}
