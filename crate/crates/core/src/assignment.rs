//! Replication degrees and data-to-worker placement.
//!
//! Row and worker indices are zero-based throughout.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::index;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignmentError {
    #[error("need at least one worker")]
    NoWorkers,
    #[error("target redundancy {d} must be >= 1")]
    TargetTooSmall { d: String },
    #[error("redundancy {d} exceeds the worker count {n}")]
    DegreeExceedsWorkers { d: String, n: usize },
    #[error("row {row} rounds to degree 0 and clamping is disabled")]
    ZeroDegree { row: usize },
    #[error("row {row} has degree {degree}, outside [1, {n}]")]
    DegreeOutOfRange { row: usize, degree: usize, n: usize },
    #[error("{n} workers cannot each receive a part of {m} rows")]
    MoreWorkersThanRows { n: usize, m: usize },
    #[error("block size {d} does not divide the worker count {n}")]
    BlockSizeMismatch { d: usize, n: usize },
    #[error("worker {worker} holds row {row}, but there are only {m} rows")]
    RowOutOfRange { worker: usize, row: usize, m: usize },
    #[error("worker {worker} lists row {row} twice")]
    DuplicateRow { worker: usize, row: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn fmt_f64(v: f64) -> String {
    let mut s = String::new();
    let _ = write!(s, "{v}");
    s
}

/// Per-row replication degrees `d_i` and their mean `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeProfile {
    degrees: Vec<usize>,
    sigma: Option<f64>,
    avg_degree: f64,
}

impl DegreeProfile {
    /// Wraps explicit degrees; every `d_i` must lie in `[1, n]`.
    pub fn from_degrees(degrees: Vec<usize>, n: usize) -> Result<Self, AssignmentError> {
        if n == 0 {
            return Err(AssignmentError::NoWorkers);
        }
        if let Some((row, &degree)) = degrees
            .iter()
            .enumerate()
            .find(|(_, &d)| d == 0 || d > n)
        {
            return Err(AssignmentError::DegreeOutOfRange { row, degree, n });
        }
        let avg_degree = mean_degree(&degrees);
        Ok(Self {
            degrees,
            sigma: None,
            avg_degree,
        })
    }

    /// Every row replicated `d` times (the Bernoulli gradient code placement).
    pub fn constant(m: usize, d: usize, n: usize) -> Result<Self, AssignmentError> {
        Self::from_degrees(vec![d; m], n)
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Proportionality constant used to derive the degrees, when they were derived.
    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn avg_degree(&self) -> f64 {
        self.avg_degree
    }

    pub fn min_degree(&self) -> usize {
        self.degrees.iter().copied().min().unwrap_or(0)
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }
}

fn mean_degree(degrees: &[usize]) -> f64 {
    if degrees.is_empty() {
        return 0.0;
    }
    degrees.iter().sum::<usize>() as f64 / degrees.len() as f64
}

/// What to do with rows whose rounded degree is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroDegreePolicy {
    /// Raise them to one so every row is computed by some worker.
    #[default]
    Clamp,
    Reject,
}

/// Degrees proportional to squared row norms: `d_i = round(σ ‖x_i‖²)` with
/// `σ = d·m / ‖X‖_F²`, clamped to `[1, n]`.
pub fn replication_degrees(
    x: &Matrix,
    d: f64,
    n: usize,
    policy: ZeroDegreePolicy,
) -> Result<DegreeProfile, AssignmentError> {
    if n == 0 {
        return Err(AssignmentError::NoWorkers);
    }
    if !(d >= 1.0) {
        return Err(AssignmentError::TargetTooSmall { d: fmt_f64(d) });
    }
    if d > n as f64 {
        return Err(AssignmentError::DegreeExceedsWorkers { d: fmt_f64(d), n });
    }
    let fro = x.frobenius_sq();
    let m = x.rows();
    let sigma = if fro > 0.0 { d * m as f64 / fro } else { 0.0 };
    let mut degrees = Vec::with_capacity(m);
    for i in 0..m {
        let raw = libm::round(sigma * x.row_norm_sq(i));
        let di = if raw < 1.0 {
            match policy {
                ZeroDegreePolicy::Clamp => 1,
                ZeroDegreePolicy::Reject => return Err(AssignmentError::ZeroDegree { row: i }),
            }
        } else {
            (raw as usize).min(n)
        };
        degrees.push(di);
    }
    let avg_degree = mean_degree(&degrees);
    Ok(DegreeProfile {
        degrees,
        sigma: Some(sigma),
        avg_degree,
    })
}

/// Which rows each worker holds (`S_j`), and the inverse map.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    n: usize,
    worker_sets: Vec<Vec<usize>>,
    row_workers: Vec<Vec<usize>>,
    profile: DegreeProfile,
}

impl Assignment {
    /// Builds an assignment from explicit worker sets over `m` rows. Degrees are the
    /// observed multiplicities; rows held by nobody are rejected.
    pub fn from_worker_sets(m: usize, worker_sets: Vec<Vec<usize>>) -> Result<Self, AssignmentError> {
        let n = worker_sets.len();
        if n == 0 {
            return Err(AssignmentError::NoWorkers);
        }
        let mut row_workers = vec![Vec::new(); m];
        let mut sets = worker_sets;
        for (j, set) in sets.iter_mut().enumerate() {
            set.sort_unstable();
            for w in set.windows(2) {
                if w[0] == w[1] {
                    return Err(AssignmentError::DuplicateRow { worker: j, row: w[0] });
                }
            }
            for &i in set.iter() {
                if i >= m {
                    return Err(AssignmentError::RowOutOfRange { worker: j, row: i, m });
                }
                row_workers[i].push(j);
            }
        }
        let degrees = row_workers.iter().map(Vec::len).collect();
        let profile = DegreeProfile::from_degrees(degrees, n)?;
        Ok(Self {
            n,
            worker_sets: sets,
            row_workers,
            profile,
        })
    }

    fn from_row_workers(n: usize, row_workers: Vec<Vec<usize>>, profile: DegreeProfile) -> Self {
        let mut worker_sets = vec![Vec::new(); n];
        for (i, ws) in row_workers.iter().enumerate() {
            for &j in ws {
                worker_sets[j].push(i);
            }
        }
        Self {
            n,
            worker_sets,
            row_workers,
            profile,
        }
    }

    pub fn workers(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.row_workers.len()
    }

    /// `S_j`, sorted.
    pub fn worker_set(&self, j: usize) -> &[usize] {
        &self.worker_sets[j]
    }

    pub fn worker_sets(&self) -> &[Vec<usize>] {
        &self.worker_sets
    }

    /// Workers holding row `i`, sorted.
    pub fn holders(&self, i: usize) -> &[usize] {
        &self.row_workers[i]
    }

    pub fn profile(&self) -> &DegreeProfile {
        &self.profile
    }

    pub fn degree(&self, i: usize) -> usize {
        self.profile.degrees[i]
    }

    /// Number of workers holding both `i1` and `i2`.
    pub fn pairwise_overlap(&self, i1: usize, i2: usize) -> usize {
        let (a, b) = (&self.row_workers[i1], &self.row_workers[i2]);
        let (mut p, mut q, mut count) = (0, 0, 0);
        while p < a.len() && q < b.len() {
            match a[p].cmp(&b[q]) {
                core::cmp::Ordering::Less => p += 1,
                core::cmp::Ordering::Greater => q += 1,
                core::cmp::Ordering::Equal => {
                    count += 1;
                    p += 1;
                    q += 1;
                }
            }
        }
        count
    }

    /// One line per worker with its space-separated row indices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for set in &self.worker_sets {
            for (k, i) in set.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{i}");
            }
            out.push('\n');
        }
        out
    }

    /// Inverse of [`Assignment::to_text`].
    pub fn parse_text(text: &str, m: usize) -> Result<Self, AssignmentError> {
        let mut sets = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let set = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|e| AssignmentError::Parse {
                        line: k + 1,
                        message: {
                            let mut s = String::new();
                            let _ = write!(s, "bad row index {tok:?}: {e}");
                            s
                        },
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            sets.push(set);
        }
        Self::from_worker_sets(m, sets)
    }
}

/// Places each row on a uniformly random `d_i`-subset of the `n` workers.
pub fn assign_replicated(
    profile: &DegreeProfile,
    n: usize,
    seed: u64,
) -> Result<Assignment, AssignmentError> {
    if n == 0 {
        return Err(AssignmentError::NoWorkers);
    }
    if let Some((row, &degree)) = profile
        .degrees
        .iter()
        .enumerate()
        .find(|(_, &d)| d == 0 || d > n)
    {
        return Err(AssignmentError::DegreeOutOfRange { row, degree, n });
    }
    let mut rng = rng::stream(rng::derive_seed(seed, rng::tag::ASSIGNMENT, &[]));
    let row_workers = profile
        .degrees
        .iter()
        .map(|&d| {
            let mut ws = index::sample(&mut rng, n, d).into_vec();
            ws.sort_unstable();
            ws
        })
        .collect();
    Ok(Assignment::from_row_workers(n, row_workers, profile.clone()))
}

/// Contiguous near-equal split of `0..m` into `parts` ranges; earlier parts take the
/// remainder.
fn contiguous_parts(m: usize, parts: usize) -> Vec<core::ops::Range<usize>> {
    let base = m / parts;
    let extra = m % parts;
    let mut start = 0;
    (0..parts)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Data partitioned across the workers without redundancy.
pub fn assign_partition(m: usize, n: usize) -> Result<Assignment, AssignmentError> {
    assign_fractional_repetition(m, n, 1)
}

/// Fractional repetition: workers form `n/d` blocks of `d`, data forms `n/d`
/// contiguous partitions, and every worker in block `b` holds partition `b`.
pub fn assign_fractional_repetition(
    m: usize,
    n: usize,
    d: usize,
) -> Result<Assignment, AssignmentError> {
    if n == 0 {
        return Err(AssignmentError::NoWorkers);
    }
    if d == 0 || !n.is_multiple_of(d) {
        return Err(AssignmentError::BlockSizeMismatch { d, n });
    }
    let blocks = n / d;
    if blocks > m {
        return Err(AssignmentError::MoreWorkersThanRows { n: blocks, m });
    }
    let parts = contiguous_parts(m, blocks);
    let mut row_workers = vec![Vec::new(); m];
    for (b, part) in parts.iter().enumerate() {
        for i in part.clone() {
            row_workers[i].extend(b * d..(b + 1) * d);
        }
    }
    let profile = DegreeProfile::constant(m, d, n)?;
    Ok(Assignment::from_row_workers(n, row_workers, profile))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn multiplicities(a: &Assignment) -> Vec<usize> {
        let mut c = vec![0; a.rows()];
        for set in a.worker_sets() {
            for &i in set {
                c[i] += 1;
            }
        }
        c
    }

    #[test]
    fn uniform_norms_give_uniform_degrees() {
        let x = Matrix::identity(6);
        let p = replication_degrees(&x, 2.0, 10, ZeroDegreePolicy::Clamp).unwrap();
        assert!(p.degrees().iter().all(|&d| d == 2));
        assert_eq!(p.avg_degree(), 2.0);
        assert_eq!(p.sigma(), Some(2.0));
    }

    #[test]
    fn hand_evaluated_degrees() {
        let x = Matrix::from_rows(&[alloc::vec![1.0, 0.0], alloc::vec![0.0, libm::sqrt(3.0)]]).unwrap();
        let p = replication_degrees(&x, 2.0, 4, ZeroDegreePolicy::Clamp).unwrap();
        assert!((p.sigma().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(p.degrees(), &[1, 3]);
        assert_eq!(p.avg_degree(), 2.0);
    }

    #[test]
    fn degree_clamping_and_errors() {
        let x = Matrix::from_rows(&[alloc::vec![0.0], alloc::vec![1.0], alloc::vec![10.0]]).unwrap();
        let p = replication_degrees(&x, 2.0, 3, ZeroDegreePolicy::Clamp).unwrap();
        // sigma = 6/101; raw degrees 0, 0.06, 5.94
        assert_eq!(p.degrees(), &[1, 1, 3]);
        assert_eq!(
            replication_degrees(&x, 2.0, 3, ZeroDegreePolicy::Reject),
            Err(AssignmentError::ZeroDegree { row: 0 })
        );
        assert!(matches!(
            replication_degrees(&x, 4.0, 3, ZeroDegreePolicy::Clamp),
            Err(AssignmentError::DegreeExceedsWorkers { .. })
        ));
        assert!(matches!(
            replication_degrees(&x, 0.5, 3, ZeroDegreePolicy::Clamp),
            Err(AssignmentError::TargetTooSmall { .. })
        ));
    }

    #[test]
    fn replicated_full_and_single() {
        let full = DegreeProfile::constant(5, 4, 4).unwrap();
        let a = assign_replicated(&full, 4, 9).unwrap();
        for j in 0..4 {
            assert_eq!(a.worker_set(j), &[0, 1, 2, 3, 4]);
        }
        assert_eq!(a.pairwise_overlap(0, 3), 4);

        let single = DegreeProfile::constant(6, 1, 6).unwrap();
        for seed in 0..20 {
            let a = assign_replicated(&single, 6, seed).unwrap();
            assert_eq!(multiplicities(&a), vec![1; 6]);
        }
        let too_big = DegreeProfile::constant(3, 5, 5).unwrap();
        assert!(matches!(
            assign_replicated(&too_big, 4, 0),
            Err(AssignmentError::DegreeOutOfRange { .. })
        ));
    }

    #[test]
    fn replicated_is_deterministic_and_exact() {
        let p = DegreeProfile::from_degrees(alloc::vec![1, 2, 3, 2, 1, 3], 5).unwrap();
        let a = assign_replicated(&p, 5, 77).unwrap();
        assert_eq!(a, assign_replicated(&p, 5, 77).unwrap());
        assert_eq!(multiplicities(&a), p.degrees());
    }

    #[test]
    fn expected_overlap_matches_pairwise_balanced_target() {
        let p = DegreeProfile::constant(2, 2, 4).unwrap();
        let runs = 100_000u64;
        let total: usize = (0..runs)
            .map(|s| assign_replicated(&p, 4, s).unwrap().pairwise_overlap(0, 1))
            .sum();
        let mean = total as f64 / runs as f64;
        assert!((mean - 1.0).abs() <= 0.02, "mean overlap {mean}");
    }

    #[test]
    fn partition_cases() {
        let a = assign_partition(4, 2).unwrap();
        assert_eq!(a.worker_sets(), &[alloc::vec![0, 1], alloc::vec![2, 3]]);
        let a = assign_partition(5, 2).unwrap();
        assert_eq!(a.worker_set(0).len(), 3);
        assert_eq!(a.worker_set(1).len(), 2);
        let a = assign_partition(3, 3).unwrap();
        assert_eq!(a.worker_sets(), &[alloc::vec![0], alloc::vec![1], alloc::vec![2]]);
        assert_eq!(a.pairwise_overlap(0, 2), 0);
        assert!(matches!(
            assign_partition(2, 3),
            Err(AssignmentError::MoreWorkersThanRows { .. })
        ));
    }

    #[test]
    fn fractional_repetition_cases() {
        let a = assign_fractional_repetition(4, 4, 2).unwrap();
        assert_eq!(a.worker_set(0), &[0, 1]);
        assert_eq!(a.worker_set(1), &[0, 1]);
        assert_eq!(a.worker_set(2), &[2, 3]);
        assert_eq!(a.worker_set(3), &[2, 3]);
        assert_eq!(a.pairwise_overlap(0, 1), 2);
        assert_eq!(a.pairwise_overlap(1, 2), 0);

        assert_eq!(
            assign_fractional_repetition(7, 3, 1).unwrap(),
            assign_partition(7, 3).unwrap()
        );

        let a = assign_fractional_repetition(6, 6, 3).unwrap();
        for j in 0..3 {
            assert_eq!(a.worker_set(j), &[0, 1, 2]);
        }
        for j in 3..6 {
            assert_eq!(a.worker_set(j), &[3, 4, 5]);
        }
        assert_eq!(multiplicities(&a), vec![3; 6]);
        assert_eq!(
            assign_fractional_repetition(6, 6, 4),
            Err(AssignmentError::BlockSizeMismatch { d: 4, n: 6 })
        );
    }

    #[test]
    fn text_format_round_trip() {
        let p = DegreeProfile::from_degrees(alloc::vec![2, 1, 3, 2], 4).unwrap();
        let a = assign_replicated(&p, 4, 3).unwrap();
        let text = a.to_text();
        assert_eq!(text.lines().count(), 4);
        let back = Assignment::parse_text(&text, 4).unwrap();
        assert_eq!(back.worker_sets(), a.worker_sets());
        assert_eq!(back.profile().degrees(), a.profile().degrees());
        assert!(matches!(
            Assignment::parse_text("0 1\nx\n", 2),
            Err(AssignmentError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Assignment::parse_text("0 5\n", 2),
            Err(AssignmentError::RowOutOfRange { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn multiplicity_equals_degree(seed in 0u64..1000, m in 1usize..30, n in 1usize..8) {
            let mut r = crate::rng::stream(seed);
            let degrees: Vec<usize> = (0..m).map(|_| rand::Rng::random_range(&mut r, 1..=n)).collect();
            let p = DegreeProfile::from_degrees(degrees, n).unwrap();
            let a = assign_replicated(&p, n, seed).unwrap();
            proptest::prop_assert_eq!(multiplicities(&a), p.degrees().to_vec());
            if n <= m {
                let part = assign_partition(m, n).unwrap();
                proptest::prop_assert_eq!(multiplicities(&part), vec![1; m]);
                let sizes: Vec<usize> = part.worker_sets().iter().map(Vec::len).collect();
                let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
                proptest::prop_assert!(spread <= 1);
            }
        }
    }
}
