//! Minibatch generation over the union of in-distribution and outlier rows,
//! with outlier rows replicated by the oversampling factor.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Result};

/// Replication rate that approximately balances classes during exposure
/// training: `(n_in / n_oe) * (o / k)`.
pub fn oversampling_factor(n_in: usize, n_oe: usize, k: usize, o: usize) -> Result<f64> {
    if n_in == 0 || n_oe == 0 || k == 0 || o == 0 {
        return Err(invalid("oversampling factor needs non-zero counts"));
    }
    Ok((n_in as f64 / n_oe as f64) * (o as f64 / k as f64))
}

/// Draws shuffled epochs over `n_in + n_oe` combined indices. Index `i < n_in`
/// is an in-distribution row; `n_in + j` is outlier row `j`.
///
/// Each epoch holds every in-distribution row once and every outlier row
/// `floor(gamma)` times, plus one extra copy with probability `frac(gamma)`.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    n_in: usize,
    n_oe: usize,
    gamma: f64,
    order: Vec<usize>,
    cursor: usize,
}

impl EpochSampler {
    pub fn new(n_in: usize, n_oe: usize, gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(invalid("oversampling factor must be positive and finite"));
        }
        if n_in == 0 {
            return Err(invalid("sampler needs in-distribution rows"));
        }
        Ok(Self { n_in, n_oe, gamma, order: Vec::new(), cursor: 0 })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// A fresh shuffled epoch.
    pub fn epoch<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let whole = libm::floor(self.gamma);
        let frac = self.gamma - whole;
        let whole = whole as usize;
        let mut order: Vec<usize> = (0..self.n_in).collect();
        order.reserve(self.n_oe * (whole + 1));
        for j in 0..self.n_oe {
            let copies = whole + usize::from(frac > 0.0 && rng.random::<f64>() < frac);
            order.extend(core::iter::repeat_n(self.n_in + j, copies));
        }
        order.shuffle(rng);
        order
    }

    /// Next minibatch of at most `batch_size` indices; a batch never spans two
    /// epochs.
    pub fn next_batch<R: Rng>(&mut self, rng: &mut R, batch_size: usize) -> &[usize] {
        if self.cursor >= self.order.len() {
            self.order = self.epoch(rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        let end = (start + batch_size).min(self.order.len());
        self.cursor = end;
        &self.order[start..end]
    }
}
