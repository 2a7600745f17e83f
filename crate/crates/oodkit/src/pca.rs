//! Principal component projections for plotting embedding spaces.

use nalgebra::{DMatrix, SymmetricEigen};
use oodkit_core::EmbeddingSet;

use crate::error::{Error, Result};

/// A fitted projection: `components` is `c x d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub components: Vec<f64>,
    /// Variance along each component (`1/(N-1)` normalization).
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl Pca {
    /// Fits on the concatenation of `sets`, in the order given.
    pub fn fit(sets: &[&EmbeddingSet], components: usize) -> Result<Self> {
        let dim = sets.first().map(|s| s.dim()).ok_or_else(|| Error::input("no input sets"))?;
        if let Some(s) = sets.iter().find(|s| s.dim() != dim) {
            return Err(Error::input(format!(
                "set {:?} has dimension {}, expected {dim}",
                s.dataset_tag(),
                s.dim()
            )));
        }
        if components == 0 || dim < components {
            return Err(Error::input(format!(
                "cannot take {components} components of {dim}-dimensional data"
            )));
        }
        let n: usize = sets.iter().map(|s| s.len()).sum();
        if n < 2 {
            return Err(Error::input(format!("PCA needs at least 2 samples, found {n}")));
        }

        let mut mean = vec![0.0; dim];
        for row in sets.iter().flat_map(|s| s.rows()) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += f64::from(v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        let mut centered = vec![0.0; dim];
        for row in sets.iter().flat_map(|s| s.rows()) {
            for ((c, &v), m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = f64::from(v) - m;
            }
            for a in 0..dim {
                for b in a..dim {
                    cov[(a, b)] += centered[a] * centered[b];
                }
            }
        }
        for a in 0..dim {
            for b in a..dim {
                let v = cov[(a, b)] / (n - 1) as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let total: f64 = (0..dim).map(|i| cov[(i, i)]).sum();

        let eigen = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));

        let mut comps = Vec::with_capacity(components * dim);
        let mut variance = Vec::with_capacity(components);
        for &j in order.iter().take(components) {
            let mut v: Vec<f64> = eigen.eigenvectors.column(j).iter().copied().collect();
            let pivot = v
                .iter()
                .enumerate()
                .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            comps.extend(v);
            variance.push(eigen.eigenvalues[j].max(0.0));
        }
        let ratio = variance.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
        Ok(Self { dim, mean, components: comps, explained_variance: variance, explained_variance_ratio: ratio })
    }

    pub fn num_components(&self) -> usize {
        self.explained_variance.len()
    }

    /// Row-major `n x c` coordinates.
    pub fn project(&self, set: &EmbeddingSet) -> Result<Vec<f64>> {
        if set.dim() != self.dim {
            return Err(Error::input(format!(
                "set {:?} has dimension {}, expected {}",
                set.dataset_tag(),
                set.dim(),
                self.dim
            )));
        }
        let mut out = Vec::with_capacity(set.len() * self.num_components());
        for row in set.rows() {
            for comp in self.components.chunks_exact(self.dim) {
                out.push(
                    comp.iter().zip(row).zip(&self.mean).map(|((c, &x), m)| c * (f64::from(x) - m)).sum(),
                );
            }
        }
        Ok(out)
    }
}
