//! Class-conditional Gaussian with a shared covariance, scored by Mahalanobis distance.
//!
//! Fitting computes per-class means `mu_c = mean of rows with label c` and the
//! pooled covariance `S = (1/N) sum_c sum_{i in c} (x_i - mu_c)(x_i - mu_c)^T`,
//! then factors `S + eps I = L L^T`. The confidence score of a query `x` is
//! `-min_c 1/2 (x - mu_c)^T (S + eps I)^{-1} (x - mu_c)`, evaluated with
//! triangular solves against `L` (no explicit inverse is ever formed).

use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::EmbeddingSet;
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, solve_lower};

/// Smallest relative ridge tried when none is requested, as a fraction of `trace(S)/D`.
pub const RIDGE_BASE: f64 = 1e-6;
/// Largest relative ridge tried before giving up.
pub const RIDGE_CAP: f64 = 1e-2;

/// Per-class means and the pooled (1/N-normalized) covariance of a labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStatistics {
    pub dim: usize,
    pub class_ids: Vec<u32>,
    pub counts: Vec<usize>,
    /// `K x D`, row-major.
    pub means: Vec<f64>,
    /// `D x D`, row-major.
    pub covariance: Vec<f64>,
}

impl ClassStatistics {
    pub fn compute(train: &EmbeddingSet) -> Result<Self> {
        let n = train.len();
        if n < 2 {
            return Err(Error::TooFewSamples { required: 2, found: n });
        }
        let groups = train.split_by_label()?;
        let d = train.dim();
        let k = groups.len();
        let mut class_ids = Vec::with_capacity(k);
        let mut counts = Vec::with_capacity(k);
        let mut means = vec![0.0; k * d];
        let mut covariance = vec![0.0; d * d];
        let mut row = vec![0.0; d];
        for (c, (&id, rows)) in groups.iter().enumerate() {
            class_ids.push(id);
            counts.push(rows.len());
            let mean = &mut means[c * d..(c + 1) * d];
            for &i in rows {
                for (m, &v) in mean.iter_mut().zip(train.row(i)) {
                    *m += f64::from(v);
                }
            }
            let inv = 1.0 / rows.len() as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
            for &i in rows {
                train.row_f64(i, &mut row);
                for (r, m) in row.iter_mut().zip(mean.iter()) {
                    *r -= m;
                }
                for a in 0..d {
                    let ra = row[a];
                    if ra == 0.0 {
                        continue;
                    }
                    for b in 0..=a {
                        covariance[a * d + b] += ra * row[b];
                    }
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for a in 0..d {
            for b in 0..=a {
                let v = covariance[a * d + b] * inv_n;
                covariance[a * d + b] = v;
                covariance[b * d + a] = v;
            }
        }
        Ok(Self { dim: d, class_ids, counts, means, covariance })
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.covariance[i * self.dim + i]).sum()
    }

    /// Unit of the relative ridge: `trace(S)/D`, or 1 when the covariance vanishes.
    pub fn ridge_scale(&self) -> f64 {
        let t = self.trace() / self.dim as f64;
        if t > 0.0 && t.is_finite() {
            t
        } else {
            1.0
        }
    }
}

/// A fitted shared-covariance Gaussian scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    dim: usize,
    class_ids: Vec<u32>,
    counts: Vec<usize>,
    means: Vec<f64>,
    chol: Vec<f64>,
    epsilon: f64,
    escalations: u32,
    // L^{-1} mu_c, cached for scoring
    whitened_means: Vec<f64>,
}

/// Fits the Gaussian. `epsilon` is the absolute ridge to try first; `None`
/// uses `RIDGE_BASE * trace(S)/D`. If the factorization fails, the ridge is
/// raised to the base value and then multiplied by ten per attempt up to
/// `RIDGE_CAP * trace(S)/D`.
pub fn fit_gaussian(train: &EmbeddingSet, epsilon: Option<f64>) -> Result<GaussianModel> {
    if let Some(e) = epsilon {
        if !e.is_finite() || e < 0.0 {
            return Err(invalid("epsilon must be finite and non-negative"));
        }
    }
    let stats = ClassStatistics::compute(train)?;
    let d = stats.dim;
    let scale = stats.ridge_scale();
    let base = RIDGE_BASE * scale;
    let cap = RIDGE_CAP * scale;
    let mut eps = epsilon.unwrap_or(base);
    let mut escalations = 0;
    let mut regularized = stats.covariance.clone();
    loop {
        for i in 0..d {
            regularized[i * d + i] = stats.covariance[i * d + i] + eps;
        }
        if let Some(chol) = cholesky(&regularized, d) {
            return Ok(GaussianModel::assemble(
                d,
                stats.class_ids,
                stats.counts,
                stats.means,
                chol,
                eps,
                escalations,
            ));
        }
        if eps >= cap {
            return Err(Error::NotPositiveDefinite { epsilon: eps });
        }
        eps = if eps < base { base } else { (eps * 10.0).min(cap) };
        escalations += 1;
    }
}

impl GaussianModel {
    fn assemble(
        dim: usize,
        class_ids: Vec<u32>,
        counts: Vec<usize>,
        means: Vec<f64>,
        chol: Vec<f64>,
        epsilon: f64,
        escalations: u32,
    ) -> Self {
        let mut whitened_means = means.clone();
        for mean in whitened_means.chunks_exact_mut(dim) {
            solve_lower(&chol, dim, mean);
        }
        Self { dim, class_ids, counts, means, chol, epsilon, escalations, whitened_means }
    }

    /// Rebuilds a model from stored parts, validating shapes and the factor diagonal.
    pub fn from_parts(
        dim: usize,
        class_ids: Vec<u32>,
        counts: Vec<usize>,
        means: Vec<f64>,
        chol: Vec<f64>,
        epsilon: f64,
        escalations: u32,
    ) -> Result<Self> {
        let k = class_ids.len();
        if dim == 0 || k == 0 {
            return Err(invalid("model needs at least one class and one dimension"));
        }
        if counts.len() != k {
            return Err(Error::ShapeMismatch { expected: k, found: counts.len() });
        }
        if means.len() != k * dim {
            return Err(Error::ShapeMismatch { expected: k * dim, found: means.len() });
        }
        if chol.len() != dim * dim {
            return Err(Error::ShapeMismatch { expected: dim * dim, found: chol.len() });
        }
        if (0..dim).any(|i| chol[i * dim + i].is_nan() || chol[i * dim + i] <= 0.0) {
            return Err(invalid("Cholesky factor must have a strictly positive diagonal"));
        }
        if means.iter().chain(&chol).any(|v| !v.is_finite()) {
            return Err(invalid("model parameters must be finite"));
        }
        Ok(Self::assemble(dim, class_ids, counts, means, chol, epsilon, escalations))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class * self.dim..(class + 1) * self.dim]
    }

    /// Lower-triangular factor of `S + eps I`, row-major.
    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    /// Ridge actually used for the factorization.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Number of times the ridge was raised during fitting.
    pub fn escalations(&self) -> u32 {
        self.escalations
    }

    fn check_rows(&self, rows: &[f32], dim: usize) -> Result<usize> {
        if dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: dim });
        }
        Ok(rows.len() / dim)
    }

    /// Half squared distances to every class for row-major `rows` of width
    /// `dim`, written as an `n x K` row-major matrix.
    pub fn per_class_rows(&self, rows: &[f32], dim: usize) -> Result<Vec<f64>> {
        let n = self.check_rows(rows, dim)?;
        let k = self.num_classes();
        let mut out = vec![0.0; n * k];
        let mut x = vec![0.0; dim];
        for (row, dist) in rows.chunks_exact(dim).zip(out.chunks_exact_mut(k)) {
            self.whiten(row, &mut x);
            for (c, slot) in dist.iter_mut().enumerate() {
                *slot = self.half_sq_dist(&x, c);
            }
        }
        Ok(out)
    }

    /// Scores row-major `rows` of width `dim`.
    pub fn score_rows(&self, rows: &[f32], dim: usize) -> Result<Vec<f64>> {
        let n = self.check_rows(rows, dim)?;
        let mut out = Vec::with_capacity(n);
        let mut x = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            self.whiten(row, &mut x);
            let min = (0..self.num_classes())
                .map(|c| self.half_sq_dist(&x, c))
                .fold(f64::INFINITY, f64::min);
            out.push(-min);
        }
        Ok(out)
    }

    fn whiten(&self, row: &[f32], x: &mut [f64]) {
        for (o, &v) in x.iter_mut().zip(row) {
            *o = f64::from(v);
        }
        solve_lower(&self.chol, self.dim, x);
    }

    fn half_sq_dist(&self, whitened: &[f64], class: usize) -> f64 {
        let m = &self.whitened_means[class * self.dim..(class + 1) * self.dim];
        0.5 * whitened.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }
}

/// Mahalanobis confidence per query row; every score is `<= 0`.
pub fn score_maha(model: &GaussianModel, query: &EmbeddingSet) -> Result<Vec<f64>> {
    model.score_rows(query.data(), query.dim())
}

/// The `n x K` matrix (row-major) of half squared Mahalanobis distances.
pub fn maha_per_class(model: &GaussianModel, query: &EmbeddingSet) -> Result<Vec<f64>> {
    model.per_class_rows(query.data(), query.dim())
}
