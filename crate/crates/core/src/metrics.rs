//! Threshold-free OOD evaluation.
//!
//! OOD samples are the positive class. Inputs are *confidence* scores (high
//! means in-distribution); the detection statistic is their negation, so a
//! lower confidence ranks a sample as more OOD-like. Tied confidences always
//! move together: AUROC uses midranks, and the precision-recall and FPR sweeps
//! only place thresholds between distinct values.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

/// Default recall level (in percent) for [`fpr_at_tpr`].
pub const DEFAULT_TPR_PERCENT: f64 = 95.0;

/// Confidence scores of in-distribution and OOD test samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    in_scores: Vec<f64>,
    out_scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(in_scores: Vec<f64>, out_scores: Vec<f64>) -> Result<Self> {
        for (side, scores) in [(0, &in_scores), (1, &out_scores)] {
            if let Some(row) = scores.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col: side });
            }
        }
        Ok(Self { in_scores, out_scores })
    }

    pub fn in_scores(&self) -> &[f64] {
        &self.in_scores
    }

    pub fn out_scores(&self) -> &[f64] {
        &self.out_scores
    }

    /// Number of OOD (positive) samples.
    pub fn m(&self) -> usize {
        self.out_scores.len()
    }

    /// Number of in-distribution (negative) samples.
    pub fn n(&self) -> usize {
        self.in_scores.len()
    }

    /// The same scores with the roles of the two sides exchanged.
    pub fn swapped(&self) -> Self {
        Self { in_scores: self.out_scores.clone(), out_scores: self.in_scores.clone() }
    }

    fn check(&self) -> Result<()> {
        if self.out_scores.is_empty() {
            return Err(Error::EmptyScores { side: "out-of-distribution" });
        }
        if self.in_scores.is_empty() {
            return Err(Error::EmptyScores { side: "in-distribution" });
        }
        Ok(())
    }

    /// Samples sorted by decreasing detection (increasing confidence),
    /// as `(confidence, is_out)`.
    fn sorted(&self) -> Vec<(f64, bool)> {
        let mut all: Vec<(f64, bool)> = self
            .in_scores
            .iter()
            .map(|&s| (s, false))
            .chain(self.out_scores.iter().map(|&s| (s, true)))
            .collect();
        all.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        all
    }

    /// Tie groups in decreasing detection order, as `(positives, negatives)`.
    fn tie_groups(&self) -> Vec<(usize, usize)> {
        let sorted = self.sorted();
        let mut groups = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            let (mut pos, mut neg) = (0, 0);
            while j < sorted.len() && sorted[j].0 == sorted[i].0 {
                if sorted[j].1 {
                    pos += 1;
                } else {
                    neg += 1;
                }
                j += 1;
            }
            groups.push((pos, neg));
            i = j;
        }
        groups
    }
}

/// Area under the ROC curve: `P(out detection > in detection) + 1/2 P(tie)`,
/// from the midrank sum of the OOD samples.
pub fn auroc(s: &ScoreSet) -> Result<f64> {
    s.check()?;
    let (m, n) = (s.m() as f64, s.n() as f64);
    // ranks ascend with detection, i.e. descend with confidence
    let groups = s.tie_groups();
    let total = s.m() + s.n();
    let mut upper = total as f64;
    let mut rank_sum = 0.0;
    for &(pos, neg) in &groups {
        let size = (pos + neg) as f64;
        let midrank = upper - (size - 1.0) / 2.0;
        rank_sum += pos as f64 * midrank;
        upper -= size;
    }
    let u = rank_sum - m * (m + 1.0) / 2.0;
    Ok(u / (m * n))
}

/// ROC curve points `(fpr, tpr)`: the origin, then one point per tie group.
pub fn roc_points(s: &ScoreSet) -> Result<Vec<(f64, f64)>> {
    s.check()?;
    let (m, n) = (s.m() as f64, s.n() as f64);
    let mut points = Vec::new();
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    for (pos, neg) in s.tie_groups() {
        tp += pos;
        fp += neg;
        points.push((fp as f64 / n, tp as f64 / m));
    }
    Ok(points)
}

/// Precision-recall points `(recall, precision)`, one per tie group.
pub fn pr_points(s: &ScoreSet) -> Result<Vec<(f64, f64)>> {
    s.check()?;
    let m = s.m() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    for (pos, neg) in s.tie_groups() {
        tp += pos;
        fp += neg;
        points.push((tp as f64 / m, tp as f64 / (tp + fp) as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

/// Average precision with OOD as positive: `sum (R_k - R_{k-1}) P_k` over
/// tie groups in decreasing detection order.
pub fn auprc(s: &ScoreSet) -> Result<f64> {
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (recall, precision) in pr_points(s)? {
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// False positive rate at the first tie-group threshold recalling at least
/// `n_percent` % of the OOD samples.
pub fn fpr_at_tpr(s: &ScoreSet, n_percent: f64) -> Result<f64> {
    if !(n_percent > 0.0 && n_percent <= 100.0) {
        return Err(crate::error::invalid("recall level must be in (0, 100]"));
    }
    s.check()?;
    let (m, n) = (s.m(), s.n());
    let target = n_percent * m as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (pos, neg) in s.tie_groups() {
        tp += pos;
        fp += neg;
        if tp as f64 * 100.0 >= target {
            return Ok(fp as f64 / n as f64);
        }
    }
    Ok(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(inn: &[f64], out: &[f64]) -> ScoreSet {
        ScoreSet::new(inn.to_vec(), out.to_vec()).unwrap()
    }

    #[test]
    fn perfect_separation() {
        let s = set(&[0.8, 0.9], &[0.1, 0.2]);
        assert_eq!(auroc(&s).unwrap(), 1.0);
        assert_eq!(auprc(&s).unwrap(), 1.0);
        assert_eq!(fpr_at_tpr(&s, 95.0).unwrap(), 0.0);
    }

    #[test]
    fn total_ties() {
        let s = set(&[0.4, 0.4], &[0.4, 0.4]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
        assert_eq!(roc_points(&s).unwrap(), vec![(0.0, 0.0), (1.0, 1.0)]);
        let s = set(&[0.4, 0.4, 0.4], &[0.4]);
        assert_eq!(auprc(&s).unwrap(), 0.25);
        assert_eq!(fpr_at_tpr(&s, 95.0).unwrap(), 1.0);
    }

    // in=[0.3,0.7], out=[0.5,0.7]; detection = -confidence.
    // pairs (out det vs in det): (-0.5,-0.3)=0, (-0.5,-0.7)=1, (-0.7,-0.3)=0, (-0.7,-0.7)=1/2
    #[test]
    fn mixed_fixture() {
        let s = set(&[0.3, 0.7], &[0.5, 0.7]);
        assert_eq!(auroc(&s).unwrap(), 0.375);
        let pts = roc_points(&s).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (1.0, 1.0)]);
        assert_eq!(trapezoid_area(&pts), 0.375);
        // groups: {in -0.3}: R=0; {out -0.5}: R=1/2,P=1/2; {both -0.7}: R=1,P=1/2
        assert_eq!(auprc(&s).unwrap(), 0.5);
        assert_eq!(fpr_at_tpr(&s, 95.0).unwrap(), 1.0);
        assert_eq!(fpr_at_tpr(&s, 50.0).unwrap(), 0.5);
    }

    #[test]
    fn one_vs_one_roc() {
        let s = set(&[1.0], &[0.0]);
        assert_eq!(roc_points(&s).unwrap(), vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn fpr95_on_matched_ramps() {
        let ramp: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = set(&ramp, &ramp);
        assert_eq!(fpr_at_tpr(&s, 95.0).unwrap(), 0.95);
        assert_eq!(auroc(&s).unwrap(), 0.5);
    }

    #[test]
    fn empty_side_rejected() {
        let s = set(&[], &[0.1]);
        assert_eq!(auroc(&s), Err(Error::EmptyScores { side: "in-distribution" }));
        let s = set(&[0.1], &[]);
        assert_eq!(auprc(&s), Err(Error::EmptyScores { side: "out-of-distribution" }));
        assert!(fpr_at_tpr(&set(&[0.1], &[0.2]), 0.0).is_err());
        assert!(fpr_at_tpr(&set(&[0.1], &[0.2]), 100.5).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(ScoreSet::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn signed_zero_ties() {
        let s = set(&[0.0], &[-0.0]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
    }
}
