//! Per-round straggler sets.
//!
//! Straggler identities are frozen for `nu` consecutive rounds and re-drawn at every
//! block boundary; within a draw each worker straggles independently with
//! probability `p`. The set for round `t` is a pure function of `(seed, t / nu)`: the
//! block index selects a ChaCha stream, so rounds can be queried in any order.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StragglerModel {
    pub p: f64,
    pub nu: usize,
    pub n: usize,
    pub seed: u64,
}

impl StragglerModel {
    /// The independent model (`nu = 1`).
    pub fn iid(p: f64, n: usize, seed: u64) -> Self {
        Self { p, nu: 1, n, seed }
    }

    /// Stragglers for round `t` (zero-based).
    pub fn sample_round(&self, t: usize) -> WorkerMask {
        let block = (t / self.nu.max(1)) as u64;
        let mut rng = rng::stream(rng::derive_seed(self.seed, rng::tag::STRAGGLER, &[]));
        rng.set_stream(block);
        let straggling = (0..self.n)
            .map(|_| rng.random::<f64>() < self.p)
            .collect();
        WorkerMask { straggling }
    }
}

/// Which workers straggle in one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerMask {
    straggling: Vec<bool>,
}

impl WorkerMask {
    pub fn none(n: usize) -> Self {
        Self {
            straggling: vec![false; n],
        }
    }

    pub fn from_stragglers(n: usize, stragglers: &[usize]) -> Self {
        let mut mask = Self::none(n);
        for &j in stragglers {
            mask.straggling[j] = true;
        }
        mask
    }

    /// Bit `j` of `bits` set means worker `j` straggles.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        Self {
            straggling: (0..n).map(|j| bits >> j & 1 == 1).collect(),
        }
    }

    pub fn workers(&self) -> usize {
        self.straggling.len()
    }

    #[inline]
    pub fn is_straggler(&self, j: usize) -> bool {
        self.straggling[j]
    }

    #[inline]
    pub fn survives(&self, j: usize) -> bool {
        !self.straggling[j]
    }

    pub fn stragglers(&self) -> impl Iterator<Item = usize> + '_ {
        self.straggling.iter().enumerate().filter(|(_, &s)| s).map(|(j, _)| j)
    }

    pub fn survivors(&self) -> impl Iterator<Item = usize> + '_ {
        self.straggling.iter().enumerate().filter(|(_, &s)| !s).map(|(j, _)| j)
    }

    pub fn straggler_count(&self) -> usize {
        self.straggling.iter().filter(|&&s| s).count()
    }
}
