//! The embedding data model shared by every scorer.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// An `n x d` row-major matrix of `f32` embeddings (or logits), with optional
/// integer class labels and class names.
///
/// All values are finite; construction rejects NaN and infinities. An empty
/// set (`n == 0`) may exist in memory as a query set, but cannot be fitted on
/// or written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Vec<f32>,
    dim: usize,
    labels: Option<Vec<u32>>,
    dataset_tag: String,
    class_names: Option<Vec<String>>,
}

impl EmbeddingSet {
    pub fn new(data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                expected: (data.len() / dim + 1) * dim,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / dim, col: pos % dim });
        }
        Ok(Self { data, dim, labels: None, dataset_tag: String::new(), class_names: None })
    }

    /// Builds a set from equally sized rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::Empty)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::LabelCount { expected: self.len(), found: labels.len() });
        }
        self.labels = Some(labels);
        self.check_label_range()?;
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        self.class_names = Some(names);
        self.check_label_range()?;
        Ok(self)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.dataset_tag = tag.into();
        self
    }

    fn check_label_range(&self) -> Result<()> {
        if let (Some(labels), Some(names)) = (&self.labels, &self.class_names) {
            if let Some((row, &label)) =
                labels.iter().enumerate().find(|(_, &l)| l as usize >= names.len())
            {
                return Err(Error::LabelOutOfRange { row, label, classes: names.len() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn dataset_tag(&self) -> &str {
        &self.dataset_tag
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Row `i` widened to `f64`.
    pub(crate) fn row_f64(&self, i: usize, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(self.row(i)) {
            *o = f64::from(v);
        }
    }

    /// Copies the given rows (and their labels) into a new set, in the order given.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(invalid("row index out of range"));
            }
            data.extend_from_slice(self.row(i));
        }
        let labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(Self {
            data,
            dim: self.dim,
            labels,
            dataset_tag: self.dataset_tag.clone(),
            class_names: self.class_names.clone(),
        })
    }

    /// Groups row indices by class label. Groups are keyed by the label value
    /// and rows keep their original order inside each group.
    pub fn split_by_label(&self) -> Result<BTreeMap<u32, Vec<usize>>> {
        let labels = self.labels.as_ref().ok_or(Error::MissingLabels)?;
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &label) in labels.iter().enumerate() {
            groups.entry(label).or_default().push(i);
        }
        Ok(groups)
    }
}

/// How outlier classes are presented to an exposure head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Each known outlier class keeps its own output (`K + O` outputs).
    LabeledOutliers,
    /// All outliers share one extra output (`K + 1` outputs).
    CollapsedSingleClass,
}

/// Counts of in-distribution and outlier classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassPartition {
    pub k_in: usize,
    pub o_out: usize,
    pub mode: PartitionMode,
}

impl ClassPartition {
    pub fn new(k_in: usize, o_out: usize, mode: PartitionMode) -> Result<Self> {
        if k_in == 0 || o_out == 0 {
            return Err(invalid("partition needs at least one in-distribution and one outlier class"));
        }
        Ok(Self { k_in, o_out, mode })
    }

    /// Width of the head output layer.
    pub fn output_width(&self) -> usize {
        match self.mode {
            PartitionMode::LabeledOutliers => self.k_in + self.o_out,
            PartitionMode::CollapsedSingleClass => self.k_in + 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn split_groups_rows() {
        let set = EmbeddingSet::new(vec![0.0; 3], 1).unwrap().with_labels(vec![0, 1, 0]).unwrap();
        let groups = set.split_by_label().unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[&0], vec![0, 2]);
        assert_eq!(groups[&1], vec![1]);
    }

    #[test]
    fn split_single_group() {
        let set = EmbeddingSet::new(vec![0.0; 4], 1).unwrap().with_labels(vec![3; 4]).unwrap();
        let groups = set.split_by_label().unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[&3], vec![0, 1, 2, 3]);
    }

    #[test]
    fn split_noncontiguous_ids() {
        let set = EmbeddingSet::new(vec![0.0; 3], 1).unwrap().with_labels(vec![2, 2, 5]).unwrap();
        let groups = set.split_by_label().unwrap();
        assert_eq!(groups[&2], vec![0, 1]);
        assert_eq!(groups[&5], vec![2]);
    }

    #[test]
    fn split_requires_labels() {
        let set = EmbeddingSet::new(vec![1.0, 2.0], 2).unwrap();
        assert_eq!(set.split_by_label(), Err(Error::MissingLabels));
    }

    #[test]
    fn rejects_non_finite() {
        let err = EmbeddingSet::new(vec![1.0, 2.0, f32::NAN, 4.0], 2).unwrap_err();
        assert_eq!(err, Error::NonFinite { row: 1, col: 0 });
    }

    #[test]
    fn rejects_label_beyond_class_names() {
        let err = EmbeddingSet::new(vec![1.0, 2.0], 1)
            .unwrap()
            .with_class_names(vec!["a".into(), "b".into()])
            .unwrap()
            .with_labels(vec![0, 2])
            .unwrap_err();
        assert_eq!(err, Error::LabelOutOfRange { row: 1, label: 2, classes: 2 });
    }

    #[test]
    fn collapsed_partition_width() {
        let p = ClassPartition::new(9, 3, PartitionMode::CollapsedSingleClass).unwrap();
        assert_eq!(p.output_width(), 10);
        let p = ClassPartition::new(9, 3, PartitionMode::LabeledOutliers).unwrap();
        assert_eq!(p.output_width(), 12);
        assert!(ClassPartition::new(0, 1, PartitionMode::LabeledOutliers).is_err());
    }
}
