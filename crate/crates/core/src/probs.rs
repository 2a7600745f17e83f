//! Softmax-derived confidence scores.

use alloc::vec::Vec;

use crate::embedding::EmbeddingSet;
use crate::error::{invalid, Error, Result};

/// Whether a [`LogitSet`] holds raw logits or already-normalized probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueKind {
    #[default]
    Logits,
    Probabilities,
}

/// `n x c` matrix of classifier outputs together with the set of output
/// columns that count as in-distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSet {
    values: Vec<f64>,
    classes: usize,
    class_ids: Vec<u32>,
    in_indices: Vec<usize>,
    kind: ValueKind,
}

impl LogitSet {
    pub fn new(values: Vec<f64>, classes: usize, in_indices: Vec<usize>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::ZeroDimension);
        }
        if !values.len().is_multiple_of(classes) {
            return Err(Error::ShapeMismatch {
                expected: (values.len() / classes + 1) * classes,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / classes, col: pos % classes });
        }
        let mut set = Self {
            values,
            classes,
            class_ids: (0..classes as u32).collect(),
            in_indices: Vec::new(),
            kind: ValueKind::Logits,
        };
        set.set_in_indices(in_indices)?;
        Ok(set)
    }

    /// Treats every column of an embedding file as a logit; all columns are
    /// in-distribution unless narrowed with [`LogitSet::with_in_indices`].
    pub fn from_embeddings(set: &EmbeddingSet) -> Result<Self> {
        let values = set.data().iter().map(|&v| f64::from(v)).collect();
        Self::new(values, set.dim(), (0..set.dim()).collect())
    }

    pub fn with_in_indices(mut self, in_indices: Vec<usize>) -> Result<Self> {
        self.set_in_indices(in_indices)?;
        Ok(self)
    }

    pub fn with_class_ids(mut self, class_ids: Vec<u32>) -> Result<Self> {
        if class_ids.len() != self.classes {
            return Err(Error::ShapeMismatch { expected: self.classes, found: class_ids.len() });
        }
        self.class_ids = class_ids;
        Ok(self)
    }

    /// Marks the values as probabilities so scoring skips the softmax.
    pub fn with_kind(mut self, kind: ValueKind) -> Self {
        self.kind = kind;
        self
    }

    fn set_in_indices(&mut self, mut in_indices: Vec<usize>) -> Result<()> {
        in_indices.sort_unstable();
        in_indices.dedup();
        if in_indices.is_empty() {
            return Err(invalid("in-distribution index set is empty"));
        }
        if let Some(&bad) = in_indices.iter().find(|&&i| i >= self.classes) {
            return Err(invalid(alloc::format!(
                "in-distribution index {bad} out of range for {} classes",
                self.classes
            )));
        }
        self.in_indices = in_indices;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn in_indices(&self) -> &[usize] {
        &self.in_indices
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.classes..(i + 1) * self.classes]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.classes)
    }

    /// Probability vector of row `i`.
    pub fn probabilities(&self, i: usize) -> Result<Vec<f64>> {
        match self.kind {
            ValueKind::Logits => softmax(self.row(i)),
            ValueKind::Probabilities => Ok(self.row(i).to_vec()),
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(row: &[f64]) -> Result<Vec<f64>> {
    let mut out = row.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) -> Result<()> {
    if let Some(col) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col });
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

/// Maximum softmax probability over all columns.
pub fn score_msp(logits: &LogitSet) -> Result<Vec<f64>> {
    (0..logits.len())
        .map(|i| {
            let p = logits.probabilities(i).map_err(|e| at_row(e, i))?;
            Ok(p.into_iter().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

/// Probability mass on the in-distribution columns, `p(in | x)`.
pub fn score_in_mass(logits: &LogitSet) -> Result<Vec<f64>> {
    (0..logits.len())
        .map(|i| {
            let p = logits.probabilities(i).map_err(|e| at_row(e, i))?;
            Ok(in_mass(&p, logits.in_indices()))
        })
        .collect()
}

pub(crate) fn in_mass(p: &[f64], in_indices: &[usize]) -> f64 {
    in_indices.iter().map(|&i| p[i]).sum()
}

fn at_row(err: Error, row: usize) -> Error {
    match err {
        Error::NonFinite { col, .. } => Error::NonFinite { row, col },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn softmax_uniform() {
        assert_eq!(softmax(&[0.0; 4]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn softmax_no_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
        // e^-1000 underflows to zero in f64
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_log_weights() {
        let p = softmax(&[0.0, 0.6931, 1.0986]).unwrap();
        for (got, want) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_rejects_nan() {
        assert_eq!(softmax(&[0.0, f64::NAN]), Err(Error::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn msp_uniform_rows() {
        let set = LogitSet::new(vec![0.0; 30], 10, vec![0]).unwrap();
        for s in score_msp(&set).unwrap() {
            assert!((s - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn msp_dominant_row() {
        let set = LogitSet::new(vec![10.0, 0.0, 0.0], 3, vec![0]).unwrap();
        let s = score_msp(&set).unwrap()[0];
        // e^10 / (e^10 + 2)
        assert!((s - 0.999_909_208_384_340_9).abs() < 1e-12);
    }

    #[test]
    fn msp_empty() {
        let set = LogitSet::new(Vec::new(), 3, vec![0]).unwrap();
        assert!(score_msp(&set).unwrap().is_empty());
    }

    #[test]
    fn in_mass_examples() {
        let set = LogitSet::new(vec![0.0, 0.0], 2, vec![0]).unwrap();
        assert_eq!(score_in_mass(&set).unwrap(), vec![0.5]);

        let set = LogitSet::new(vec![0.3, -1.0, 2.0], 3, vec![0, 1, 2]).unwrap();
        assert!((score_in_mass(&set).unwrap()[0] - 1.0).abs() < 1e-12);

        let set = LogitSet::new(vec![0.0, 0.0, core::f64::consts::LN_2], 3, vec![0, 1]).unwrap();
        assert!((score_in_mass(&set).unwrap()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn in_indices_validated() {
        assert!(LogitSet::new(vec![0.0; 2], 2, vec![]).is_err());
        assert!(LogitSet::new(vec![0.0; 2], 2, vec![2]).is_err());
    }

    #[test]
    fn probabilities_pass_through() {
        let set = LogitSet::new(vec![0.2, 0.7, 0.1], 3, vec![0, 2])
            .unwrap()
            .with_kind(ValueKind::Probabilities);
        assert_eq!(score_msp(&set).unwrap(), vec![0.7]);
        assert!((score_in_mass(&set).unwrap()[0] - 0.3).abs() < 1e-15);
    }
}
