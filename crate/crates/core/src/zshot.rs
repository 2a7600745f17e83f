//! Zero-shot OOD scoring from image embeddings and two groups of candidate
//! label text embeddings.
//!
//! Logit `j` of an image is the dot product of its embedding with candidate
//! `j` (in-group first, then out-group). With normalization enabled, both
//! sides are L2-normalized and the dot product is divided by the temperature.
//! The score is the softmax mass of the in-group.

use alloc::string::String;
use alloc::vec::Vec;

use crate::embedding::EmbeddingSet;
use crate::error::{invalid, Error, Result};
use crate::probs::{score_in_mass, score_msp, LogitSet};

/// Default temperature applied to normalized similarities.
pub const DEFAULT_TEMPERATURE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZshotOptions {
    pub normalize: bool,
    pub temperature: f64,
}

impl ZshotOptions {
    /// Literal dot products: no normalization, temperature 1.
    pub fn raw() -> Self {
        Self { normalize: false, temperature: 1.0 }
    }
}

impl Default for ZshotOptions {
    fn default() -> Self {
        Self { normalize: true, temperature: DEFAULT_TEMPERATURE }
    }
}

/// How [`score_zshot`] turns similarities into a confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZshotMode {
    /// Softmax over in and out candidates, summed over the in-group.
    InMass,
    /// No out-group: maximum softmax probability over the in-group.
    MspBaseline,
}

/// Candidate label embeddings split into in- and out-distribution groups.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLabels {
    dim: usize,
    in_text: Vec<f64>,
    in_names: Vec<String>,
    out_text: Vec<f64>,
    out_names: Vec<String>,
    options: ZshotOptions,
}

fn names_for(set: &EmbeddingSet, prefix: &str) -> Vec<String> {
    match set.class_names() {
        Some(names) if names.len() == set.len() => names.to_vec(),
        _ => (0..set.len()).map(|i| alloc::format!("{prefix}{i}")).collect(),
    }
}

fn normalize_rows(values: &mut [f64], dim: usize) -> Result<()> {
    for (row, chunk) in values.chunks_exact_mut(dim).enumerate() {
        let norm = libm::sqrt(chunk.iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 {
            return Err(Error::ZeroNorm { row });
        }
        chunk.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(())
}

impl CandidateLabels {
    /// Builds the label groups from text-embedding sets. Label strings come
    /// from each set's class names when there is one name per row.
    pub fn from_sets(
        in_text: &EmbeddingSet,
        out_text: Option<&EmbeddingSet>,
        options: ZshotOptions,
    ) -> Result<Self> {
        if in_text.is_empty() {
            return Err(invalid("at least one in-distribution candidate label is required"));
        }
        if !options.temperature.is_finite() || options.temperature <= 0.0 {
            return Err(invalid("temperature must be positive"));
        }
        let dim = in_text.dim();
        let widen = |s: &EmbeddingSet| s.data().iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();
        let mut in_values = widen(in_text);
        let (mut out_values, out_names) = match out_text {
            Some(out) => {
                if out.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: out.dim() });
                }
                (widen(out), names_for(out, "out_"))
            }
            None => (Vec::new(), Vec::new()),
        };
        if options.normalize {
            normalize_rows(&mut in_values, dim)?;
            normalize_rows(&mut out_values, dim).map_err(|e| match e {
                Error::ZeroNorm { row } => Error::ZeroNorm { row: row + in_text.len() },
                other => other,
            })?;
        }
        Ok(Self {
            dim,
            in_text: in_values,
            in_names: names_for(in_text, "in_"),
            out_text: out_values,
            out_names,
            options,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.in_text.len() / self.dim
    }

    pub fn o(&self) -> usize {
        self.out_text.len() / self.dim
    }

    pub fn in_names(&self) -> &[String] {
        &self.in_names
    }

    pub fn out_names(&self) -> &[String] {
        &self.out_names
    }

    pub fn options(&self) -> ZshotOptions {
        self.options
    }

    /// Stored (possibly normalized) candidate rows, in-group then out-group.
    pub fn candidate(&self, j: usize) -> &[f64] {
        let k = self.k();
        if j < k {
            &self.in_text[j * self.dim..(j + 1) * self.dim]
        } else {
            &self.out_text[(j - k) * self.dim..(j - k + 1) * self.dim]
        }
    }

    pub fn mode(&self) -> ZshotMode {
        if self.out_text.is_empty() {
            ZshotMode::MspBaseline
        } else {
            ZshotMode::InMass
        }
    }
}

/// Similarity logits, `n x (K + O)`, with the first `K` columns marked in-distribution.
pub fn similarity_logits(images: &EmbeddingSet, labels: &CandidateLabels) -> Result<LogitSet> {
    if images.dim() != labels.dim {
        return Err(Error::DimensionMismatch { expected: labels.dim, found: images.dim() });
    }
    let width = labels.k() + labels.o();
    let scale = 1.0 / labels.options.temperature;
    let mut values = Vec::with_capacity(images.len() * width);
    let mut x = alloc::vec![0.0; labels.dim];
    for i in 0..images.len() {
        images.row_f64(i, &mut x);
        if labels.options.normalize {
            normalize_rows(&mut x, labels.dim).map_err(|_| Error::ZeroNorm { row: i })?;
        }
        for j in 0..width {
            let dot: f64 = labels.candidate(j).iter().zip(&x).map(|(a, b)| a * b).sum();
            values.push(dot * scale);
        }
    }
    LogitSet::new(values, width, (0..labels.k()).collect())
}

/// Zero-shot confidence `p(in | x)`; without out-group candidates this falls
/// back to the in-group maximum softmax probability.
pub fn score_zshot(images: &EmbeddingSet, labels: &CandidateLabels) -> Result<Vec<f64>> {
    let logits = similarity_logits(images, labels)?;
    match labels.mode() {
        ZshotMode::InMass => score_in_mass(&logits),
        ZshotMode::MspBaseline => score_msp(&logits),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(rows: &[[f32; 2]]) -> EmbeddingSet {
        EmbeddingSet::from_rows(rows).unwrap()
    }

    #[test]
    fn raw_dot_products() {
        let labels = CandidateLabels::from_sets(&set(&[[1.0, 0.0]]), Some(&set(&[[0.0, 1.0]])), ZshotOptions::raw()).unwrap();
        let logits = similarity_logits(&set(&[[1.0, 0.0]]), &labels).unwrap();
        assert_eq!(logits.row(0), &[1.0, 0.0]);
        assert_eq!(logits.in_indices(), &[0]);
    }

    #[test]
    fn normalization_removes_image_scale() {
        let opts = ZshotOptions { normalize: true, temperature: 1.0 };
        let labels = CandidateLabels::from_sets(&set(&[[3.0, 4.0]]), Some(&set(&[[0.0, 2.0]])), opts).unwrap();
        let a = similarity_logits(&set(&[[2.0, 0.0]]), &labels).unwrap();
        let b = similarity_logits(&set(&[[1.0, 0.0]]), &labels).unwrap();
        assert_eq!(a, b);
        assert!((a.row(0)[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_image_gives_uniform() {
        let labels = CandidateLabels::from_sets(&set(&[[1.0, 0.0]]), Some(&set(&[[1.0, 0.0]])), ZshotOptions::raw()).unwrap();
        let scores = score_zshot(&set(&[[0.0, 1.0]]), &labels).unwrap();
        assert_eq!(scores, vec![0.5]);
    }

    #[test]
    fn out_aligned_image() {
        // logits [0, 5] -> p(in) = 1 / (1 + e^5)
        let labels = CandidateLabels::from_sets(&set(&[[1.0, 0.0]]), Some(&set(&[[0.0, 1.0]])), ZshotOptions::raw()).unwrap();
        let s = score_zshot(&set(&[[0.0, 5.0]]), &labels).unwrap()[0];
        assert!((s - 0.006_692_850_924_284_855_4).abs() < 1e-6);
    }

    #[test]
    fn uniform_three_in_one_out() {
        let inn = set(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]);
        let labels = CandidateLabels::from_sets(&inn, Some(&set(&[[1.0, 0.0]])), ZshotOptions::raw()).unwrap();
        let s = score_zshot(&set(&[[0.0, 1.0]]), &labels).unwrap()[0];
        assert!((s - 0.75).abs() < 1e-12);
    }

    #[test]
    fn baseline_without_out_labels() {
        let inn = EmbeddingSet::new(vec![1.0; 20], 2).unwrap();
        let labels = CandidateLabels::from_sets(&inn, None, ZshotOptions::raw()).unwrap();
        assert_eq!(labels.mode(), ZshotMode::MspBaseline);
        let s = score_zshot(&set(&[[0.0, 0.0]]), &labels).unwrap()[0];
        assert!((s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_rejected() {
        let err = CandidateLabels::from_sets(&set(&[[1.0, 0.0]]), Some(&set(&[[0.0, 0.0]])), ZshotOptions::default()).unwrap_err();
        assert_eq!(err, Error::ZeroNorm { row: 1 });
        let labels = CandidateLabels::from_sets(&set(&[[1.0, 0.0]]), None, ZshotOptions::default()).unwrap();
        assert_eq!(similarity_logits(&set(&[[1.0, 1.0], [0.0, 0.0]]), &labels).unwrap_err(), Error::ZeroNorm { row: 1 });
    }

    #[test]
    fn dimension_checked() {
        let labels = CandidateLabels::from_sets(&set(&[[1.0, 0.0]]), None, ZshotOptions::raw()).unwrap();
        let img = EmbeddingSet::new(vec![1.0, 0.0, 0.0], 3).unwrap();
        assert!(matches!(score_zshot(&img, &labels), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn label_names_from_class_names() {
        let inn = set(&[[1.0, 0.0], [0.0, 1.0]]).with_class_names(vec!["cat".into(), "dog".into()]).unwrap();
        let labels = CandidateLabels::from_sets(&inn, None, ZshotOptions::raw()).unwrap();
        assert_eq!(labels.in_names(), &["cat", "dog"]);
    }
}
