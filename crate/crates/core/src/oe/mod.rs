//! Few-shot outlier exposure: train a small head on frozen embeddings from the
//! in-distribution training set plus a handful of known outliers, then score
//! queries by the probability mass on the in-distribution classes.

mod adam;
mod head;
mod sampler;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use self::adam::Adam;
pub use self::head::{batch_loss, head_gradient, score_oe, LayerShape, OeHead};
pub use self::sampler::{oversampling_factor, EpochSampler};

use crate::embedding::{ClassPartition, EmbeddingSet, PartitionMode};
use crate::error::{invalid, Error, Result};
use crate::metrics::{auroc, ScoreSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Linear,
    MlpOneHidden,
}

/// Training configuration for an exposure head.
#[derive(Debug, Clone, PartialEq)]
pub struct OeConfig {
    pub head_kind: HeadKind,
    /// Hidden width; ignored by linear heads.
    pub hidden_units: usize,
    pub mode: PartitionMode,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Coefficient `l` of the `l/2 * ||W||^2` weight penalty (biases excluded).
    pub l2_penalty: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Replaces the computed oversampling factor when set.
    pub oversample_override: Option<f64>,
    /// Validation interval in steps when checkpoints are selected by AUROC.
    pub eval_every: usize,
}

impl OeConfig {
    /// Linear head: batch 200, penalty 1, step size 0.001, 1000 steps.
    pub fn linear() -> Self {
        Self {
            head_kind: HeadKind::Linear,
            hidden_units: 1024,
            mode: PartitionMode::LabeledOutliers,
            batch_size: 200,
            learning_rate: 0.001,
            l2_penalty: 1.0,
            max_steps: 1000,
            seed: 0,
            oversample_override: None,
            eval_every: 100,
        }
    }

    /// One hidden layer of 1024 rectifier units, step size 0.001, 10000 steps.
    pub fn mlp() -> Self {
        Self { head_kind: HeadKind::MlpOneHidden, max_steps: 10_000, ..Self::linear() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_kind == HeadKind::MlpOneHidden && self.hidden_units == 0 {
            return Err(invalid("hidden_units must be positive"));
        }
        if self.batch_size == 0 || self.max_steps == 0 || self.eval_every == 0 {
            return Err(invalid("batch_size, max_steps and eval_every must be positive"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(invalid("learning_rate must be positive"));
        }
        if !self.l2_penalty.is_finite() || self.l2_penalty < 0.0 {
            return Err(invalid("l2_penalty must be non-negative"));
        }
        if let Some(g) = self.oversample_override {
            if !g.is_finite() || g <= 0.0 {
                return Err(invalid("oversampling override must be positive"));
            }
        }
        Ok(())
    }
}

impl Default for OeConfig {
    fn default() -> Self {
        Self::linear()
    }
}

/// Held-out in/out pair used to pick the best checkpoint by AUROC.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub in_set: &'a EmbeddingSet,
    pub out_set: &'a EmbeddingSet,
}

/// Class layout derived from the training sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLayout {
    pub in_class_ids: Vec<u32>,
    pub out_class_ids: Vec<u32>,
    pub partition: ClassPartition,
    /// Oversampling factor in effect (computed or overridden).
    pub gamma: f64,
}

impl ClassLayout {
    pub fn derive(in_train: &EmbeddingSet, oe_train: &EmbeddingSet, config: &OeConfig) -> Result<Self> {
        let in_groups = in_train.split_by_label()?;
        let out_groups = oe_train.split_by_label()?;
        let partition = ClassPartition::new(in_groups.len(), out_groups.len(), config.mode)?;
        let gamma = match config.oversample_override {
            Some(g) => g,
            None => oversampling_factor(
                in_train.len(),
                oe_train.len(),
                partition.k_in,
                partition.o_out,
            )?,
        };
        Ok(Self {
            in_class_ids: in_groups.into_keys().collect(),
            out_class_ids: out_groups.into_keys().collect(),
            partition,
            gamma,
        })
    }

    fn targets(&self, in_train: &EmbeddingSet, oe_train: &EmbeddingSet) -> Vec<usize> {
        let index = |ids: &[u32]| -> BTreeMap<u32, usize> {
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
        };
        let in_index = index(&self.in_class_ids);
        let out_index = index(&self.out_class_ids);
        let k = self.partition.k_in;
        let mut targets: Vec<usize> =
            in_train.labels().unwrap_or_default().iter().map(|l| in_index[l]).collect();
        targets.extend(oe_train.labels().unwrap_or_default().iter().map(|l| match self.partition.mode {
            PartitionMode::LabeledOutliers => k + out_index[l],
            PartitionMode::CollapsedSingleClass => k,
        }));
        targets
    }
}

/// Trains a head with a fixed step budget and returns the final parameters.
pub fn train_oe_head(
    in_train: &EmbeddingSet,
    oe_train: &EmbeddingSet,
    config: &OeConfig,
) -> Result<OeHead> {
    train_oe_head_with_validation(in_train, oe_train, config, None)
}

/// Trains a head; with a validation pair, AUROC is evaluated every
/// `eval_every` steps (and at the last step) and the best checkpoint is
/// returned, earliest on ties.
pub fn train_oe_head_with_validation(
    in_train: &EmbeddingSet,
    oe_train: &EmbeddingSet,
    config: &OeConfig,
    validation: Option<Validation<'_>>,
) -> Result<OeHead> {
    config.validate()?;
    let dim = in_train.dim();
    if oe_train.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: oe_train.dim() });
    }
    if let Some(v) = validation {
        for set in [v.in_set, v.out_set] {
            if set.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: set.dim() });
            }
        }
    }
    let layout = ClassLayout::derive(in_train, oe_train, config)?;
    let targets = layout.targets(in_train, oe_train);
    let n_in = in_train.len();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut head = OeHead::zeroed(
        config.clone(),
        layout.partition,
        dim,
        layout.in_class_ids.clone(),
        layout.out_class_ids.clone(),
    )?
    .initialize(&mut rng);

    let mut sampler = EpochSampler::new(n_in, oe_train.len(), layout.gamma)?;
    let mut adam = Adam::new(config.learning_rate, head.params().len());
    let mut grad = vec![0.0; head.params().len()];
    let mut xs = Vec::with_capacity(config.batch_size * dim);
    let mut batch_targets = Vec::with_capacity(config.batch_size);
    let mut log = Vec::with_capacity(config.max_steps);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for step in 1..=config.max_steps {
        xs.clear();
        batch_targets.clear();
        for &i in sampler.next_batch(&mut rng, config.batch_size) {
            let row = if i < n_in { in_train.row(i) } else { oe_train.row(i - n_in) };
            xs.extend(row.iter().map(|&v| f64::from(v)));
            batch_targets.push(targets[i]);
        }
        let loss = head.loss_and_gradient(&xs, &batch_targets, &mut grad);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        log.push(loss);
        adam.step(head.params_mut(), &grad);

        if let Some(v) = validation {
            if step % config.eval_every == 0 || step == config.max_steps {
                let scores =
                    ScoreSet::new(score_oe(&head, v.in_set)?, score_oe(&head, v.out_set)?)?;
                let value = auroc(&scores)?;
                if best.as_ref().is_none_or(|(b, _, _)| value > *b) {
                    best = Some((value, step, head.params().to_vec()));
                }
            }
        }
    }

    let selected = match best {
        Some((_, step, params)) => {
            head.set_params(params)?;
            Some(step)
        }
        None => None,
    };
    head.set_training_record(log, selected);
    Ok(head)
}

/// Picks exactly `shots` rows per class (uniformly, without replacement,
/// seeded) and returns their indices in ascending order.
pub fn subsample_shots(set: &EmbeddingSet, shots: usize, seed: u64) -> Result<Vec<usize>> {
    if shots == 0 {
        return Err(invalid("shots must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for (class, rows) in set.split_by_label()? {
        if rows.len() < shots {
            return Err(invalid(alloc::format!(
                "class {class} has {} rows, fewer than {shots} shots",
                rows.len()
            )));
        }
        picked.extend(sample(&mut rng, rows.len(), shots).into_iter().map(|j| rows[j]));
    }
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn blobs() -> (EmbeddingSet, EmbeddingSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        let mut pts = |cx: f32, cy: f32| -> Vec<f32> {
            (0..50)
                .flat_map(|_| {
                    [cx + rng.random_range(-1.0f32..1.0), cy + rng.random_range(-1.0f32..1.0)]
                })
                .collect()
        };
        let inn = EmbeddingSet::new(pts(-3.0, 0.0), 2).unwrap().with_labels(vec![0; 50]).unwrap();
        let out = EmbeddingSet::new(pts(3.0, 0.0), 2).unwrap().with_labels(vec![9; 50]).unwrap();
        (inn, out)
    }

    #[test]
    fn collapsed_mode_width_and_targets() {
        let inn = EmbeddingSet::new(vec![0.0, 1.0, 2.0], 1).unwrap().with_labels(vec![4, 5, 4]).unwrap();
        let out = EmbeddingSet::new(vec![7.0, 8.0, 9.0], 1).unwrap().with_labels(vec![1, 2, 3]).unwrap();
        let config = OeConfig { mode: PartitionMode::CollapsedSingleClass, max_steps: 1, ..OeConfig::linear() };
        let layout = ClassLayout::derive(&inn, &out, &config).unwrap();
        assert_eq!(layout.partition.output_width(), 3);
        assert_eq!(layout.targets(&inn, &out), vec![0, 1, 0, 2, 2, 2]);
        let head = train_oe_head(&inn, &out, &config).unwrap();
        assert_eq!(head.output_width(), 3);
    }

    #[test]
    fn separable_blobs_train_to_zero_error() {
        let (inn, out) = blobs();
        let config = OeConfig { l2_penalty: 1e-3, learning_rate: 0.01, max_steps: 500, seed: 5, ..OeConfig::linear() };
        let head = train_oe_head(&inn, &out, &config).unwrap();
        let log = head.training_log();
        assert_eq!(log.len(), 500);
        assert!(log.iter().all(|l| l.is_finite()));
        assert!(log.last().unwrap() < &log[0]);
        assert!(score_oe(&head, &inn).unwrap().iter().all(|&s| s > 0.5));
        assert!(score_oe(&head, &out).unwrap().iter().all(|&s| s < 0.5));
        let single = out.select(&[7]).unwrap();
        assert!(score_oe(&head, &single).unwrap()[0] < 0.5);
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let (inn, out) = blobs();
        let config = OeConfig { max_steps: 50, seed: 42, ..OeConfig::mlp() };
        let config = OeConfig { hidden_units: 8, ..config };
        let a = train_oe_head(&inn, &out, &config).unwrap();
        let b = train_oe_head(&inn, &out, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_selects_checkpoint() {
        let (inn, out) = blobs();
        let config = OeConfig { max_steps: 30, eval_every: 10, ..OeConfig::linear() };
        let v = Validation { in_set: &inn, out_set: &out };
        let head = train_oe_head_with_validation(&inn, &out, &config, Some(v)).unwrap();
        assert!(matches!(head.selected_step(), Some(10 | 20 | 30)));
        let plain = train_oe_head(&inn, &out, &config).unwrap();
        assert_eq!(plain.selected_step(), None);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let (inn, _) = blobs();
        let out = EmbeddingSet::new(vec![0.0; 3], 3).unwrap().with_labels(vec![1]).unwrap();
        assert!(matches!(
            train_oe_head(&inn, &out, &OeConfig::linear()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn shots_per_class() {
        let labels: Vec<u32> = (0..60).map(|i| i % 3).collect();
        let set = EmbeddingSet::new(vec![0.0; 60], 1).unwrap().with_labels(labels.clone()).unwrap();
        let picked = subsample_shots(&set, 10, 7).unwrap();
        assert_eq!(picked.len(), 30);
        for c in 0..3 {
            assert_eq!(picked.iter().filter(|&&i| labels[i] == c).count(), 10);
        }
        assert_eq!(picked, subsample_shots(&set, 10, 7).unwrap());
        assert!(subsample_shots(&set, 21, 7).is_err());
    }
}
