//! Classification heads on frozen embeddings: a linear map or a single
//! rectifier hidden layer, followed by softmax over `K + O'` outputs.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::embedding::{ClassPartition, EmbeddingSet};
use crate::error::{invalid, Error, Result};
use crate::oe::{HeadKind, OeConfig};
use crate::probs::{in_mass, softmax_in_place};

/// Shape of one dense layer, `outputs x inputs` weights plus `outputs` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
}

impl LayerShape {
    fn weights(&self) -> usize {
        self.inputs * self.outputs
    }

    fn params(&self) -> usize {
        self.weights() + self.outputs
    }
}

/// A trained (or freshly initialized) exposure head.
///
/// Parameters are stored flat, layer by layer: row-major weights followed by
/// biases. Output columns `0..K` are the in-distribution classes, the rest
/// are outlier classes.
#[derive(Debug, Clone, PartialEq)]
pub struct OeHead {
    config: OeConfig,
    partition: ClassPartition,
    input_dim: usize,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    in_class_ids: Vec<u32>,
    out_class_ids: Vec<u32>,
    training_log: Vec<f64>,
    selected_step: Option<usize>,
}

impl OeHead {
    fn shapes(config: &OeConfig, input_dim: usize, width: usize) -> Vec<LayerShape> {
        match config.head_kind {
            HeadKind::Linear => vec![LayerShape { inputs: input_dim, outputs: width }],
            HeadKind::MlpOneHidden => vec![
                LayerShape { inputs: input_dim, outputs: config.hidden_units },
                LayerShape { inputs: config.hidden_units, outputs: width },
            ],
        }
    }

    /// Head with all parameters zero.
    pub fn zeroed(
        config: OeConfig,
        partition: ClassPartition,
        input_dim: usize,
        in_class_ids: Vec<u32>,
        out_class_ids: Vec<u32>,
    ) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if in_class_ids.len() != partition.k_in || out_class_ids.len() != partition.o_out {
            return Err(invalid("class id lists do not match the partition"));
        }
        let layers = Self::shapes(&config, input_dim, partition.output_width());
        let params = vec![0.0; layers.iter().map(LayerShape::params).sum()];
        Ok(Self {
            config,
            partition,
            input_dim,
            layers,
            params,
            in_class_ids,
            out_class_ids,
            training_log: Vec::new(),
            selected_step: None,
        })
    }

    /// Uniform Glorot initialization of the weights, zero biases.
    pub fn initialize<R: Rng>(mut self, rng: &mut R) -> Self {
        let mut offset = 0;
        for shape in &self.layers {
            let limit = libm::sqrt(6.0 / (shape.inputs + shape.outputs) as f64);
            for w in &mut self.params[offset..offset + shape.weights()] {
                *w = rng.random_range(-limit..limit);
            }
            offset += shape.params();
        }
        self
    }

    /// Rebuilds a head from stored parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: OeConfig,
        partition: ClassPartition,
        input_dim: usize,
        in_class_ids: Vec<u32>,
        out_class_ids: Vec<u32>,
        params: Vec<f64>,
        training_log: Vec<f64>,
        selected_step: Option<usize>,
    ) -> Result<Self> {
        let mut head = Self::zeroed(config, partition, input_dim, in_class_ids, out_class_ids)?;
        head.set_params(params)?;
        head.training_log = training_log;
        head.selected_step = selected_step;
        Ok(head)
    }

    pub fn config(&self) -> &OeConfig {
        &self.config
    }

    pub fn partition(&self) -> ClassPartition {
        self.partition
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_width(&self) -> usize {
        self.partition.output_width()
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch { expected: self.params.len(), found: params.len() });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(invalid("head parameters must be finite"));
        }
        self.params = params;
        Ok(())
    }

    pub fn in_class_ids(&self) -> &[u32] {
        &self.in_class_ids
    }

    pub fn out_class_ids(&self) -> &[u32] {
        &self.out_class_ids
    }

    /// Loss of every training step, recorded before that step's update.
    pub fn training_log(&self) -> &[f64] {
        &self.training_log
    }

    /// Step whose parameters were kept when checkpoints were selected on a
    /// validation pair.
    pub fn selected_step(&self) -> Option<usize> {
        self.selected_step
    }

    pub(crate) fn set_training_record(&mut self, log: Vec<f64>, selected_step: Option<usize>) {
        self.training_log = log;
        self.selected_step = selected_step;
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: dim });
        }
        Ok(())
    }

    /// Output logits for one input row; `hidden` receives the post-activation
    /// hidden layer (empty for linear heads).
    fn forward_row(&self, x: &[f64], hidden: &mut Vec<f64>, logits: &mut [f64]) {
        hidden.clear();
        match self.layers.as_slice() {
            [out] => dense(&self.params, *out, x, logits),
            [first, out] => {
                hidden.resize(first.outputs, 0.0);
                dense(&self.params[..first.params()], *first, x, hidden);
                hidden.iter_mut().for_each(|h| *h = h.max(0.0));
                dense(&self.params[first.params()..], *out, hidden, logits);
            }
            _ => unreachable!("heads have one or two layers"),
        }
    }

    /// Softmax outputs of row-major `rows`, as an `n x (K + O')` matrix.
    pub fn probabilities_rows(&self, rows: &[f32], dim: usize) -> Result<Vec<f64>> {
        self.check_dim(dim)?;
        let width = self.output_width();
        let n = rows.len() / dim;
        let mut out = vec![0.0; n * width];
        let mut x = vec![0.0; dim];
        let mut hidden = Vec::new();
        for (row, p) in rows.chunks_exact(dim).zip(out.chunks_exact_mut(width)) {
            for (a, &v) in x.iter_mut().zip(row) {
                *a = f64::from(v);
            }
            self.forward_row(&x, &mut hidden, p);
            softmax_in_place(p)?;
        }
        Ok(out)
    }

    pub fn probabilities(&self, query: &EmbeddingSet) -> Result<Vec<f64>> {
        self.probabilities_rows(query.data(), query.dim())
    }

    /// In-distribution probability mass of row-major `rows`.
    pub fn score_rows(&self, rows: &[f32], dim: usize) -> Result<Vec<f64>> {
        let width = self.output_width();
        let in_idx: Vec<usize> = (0..self.partition.k_in).collect();
        Ok(self
            .probabilities_rows(rows, dim)?
            .chunks_exact(width)
            .map(|p| in_mass(p, &in_idx))
            .collect())
    }

    /// Mean cross-entropy plus `l2/2 * ||W||^2` (weights only) and its
    /// gradient over a batch of rows with head-output targets.
    pub(crate) fn loss_and_gradient(
        &self,
        xs: &[f64],
        targets: &[usize],
        grad: &mut [f64],
    ) -> f64 {
        let dim = self.input_dim;
        let width = self.output_width();
        let batch = targets.len();
        let inv_b = 1.0 / batch as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut hidden = Vec::new();
        let mut logits = vec![0.0; width];
        let mut delta_hidden = Vec::new();
        let mut loss = 0.0;

        let (first, second) = (self.layers[0], self.layers.get(1).copied());
        for (x, &y) in xs.chunks_exact(dim).zip(targets) {
            self.forward_row(x, &mut hidden, &mut logits);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = libm::log(logits.iter().map(|z| libm::exp(z - max)).sum::<f64>()) + max;
            loss += log_sum - logits[y];
            // dL/dz = (softmax - onehot) / B
            for (o, z) in logits.iter_mut().enumerate() {
                *z = (libm::exp(*z - log_sum) - f64::from(u8::from(o == y))) * inv_b;
            }
            let delta_out = &logits;
            match second {
                None => accumulate_dense(grad, 0, first, x, delta_out),
                Some(out_shape) => {
                    let hidden_offset = first.params();
                    accumulate_dense(grad, hidden_offset, out_shape, &hidden, delta_out);
                    let w2 = &self.params[hidden_offset..hidden_offset + out_shape.weights()];
                    delta_hidden.clear();
                    delta_hidden.extend((0..out_shape.inputs).map(|h| {
                        if hidden[h] > 0.0 {
                            (0..width).map(|o| w2[o * out_shape.inputs + h] * delta_out[o]).sum()
                        } else {
                            0.0
                        }
                    }));
                    accumulate_dense(grad, 0, first, x, &delta_hidden);
                }
            }
        }
        loss *= inv_b;

        let l2 = self.config.l2_penalty;
        if l2 != 0.0 {
            let mut offset = 0;
            for shape in &self.layers {
                let w = &self.params[offset..offset + shape.weights()];
                loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
                for (g, v) in grad[offset..offset + shape.weights()].iter_mut().zip(w) {
                    *g += l2 * v;
                }
                offset += shape.params();
            }
        }
        loss
    }

    fn batch_rows(&self, batch: &EmbeddingSet) -> Result<(Vec<f64>, Vec<usize>)> {
        self.check_dim(batch.dim())?;
        let labels = batch.labels().ok_or(Error::MissingLabels)?;
        if batch.is_empty() {
            return Err(Error::Empty);
        }
        let width = self.output_width();
        let targets = labels
            .iter()
            .enumerate()
            .map(|(row, &l)| {
                if (l as usize) < width {
                    Ok(l as usize)
                } else {
                    Err(Error::LabelOutOfRange { row, label: l, classes: width })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let xs = batch.data().iter().map(|&v| f64::from(v)).collect();
        Ok((xs, targets))
    }
}

fn dense(params: &[f64], shape: LayerShape, input: &[f64], out: &mut [f64]) {
    let (w, b) = params[..shape.params()].split_at(shape.weights());
    for (o, slot) in out.iter_mut().enumerate() {
        let row = &w[o * shape.inputs..(o + 1) * shape.inputs];
        *slot = b[o] + row.iter().zip(input).map(|(a, v)| a * v).sum::<f64>();
    }
}

fn accumulate_dense(grad: &mut [f64], offset: usize, shape: LayerShape, input: &[f64], delta: &[f64]) {
    let (w, b) = grad[offset..offset + shape.params()].split_at_mut(shape.weights());
    for (o, &d) in delta.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        b[o] += d;
        for (g, v) in w[o * shape.inputs..(o + 1) * shape.inputs].iter_mut().zip(input) {
            *g += d * v;
        }
    }
}

/// `p(in | x)`: probability mass the head puts on the in-distribution classes.
pub fn score_oe(head: &OeHead, query: &EmbeddingSet) -> Result<Vec<f64>> {
    head.score_rows(query.data(), query.dim())
}

/// Analytic gradient of the regularized mean cross-entropy over `batch`,
/// whose labels are head output indices. Same layout as [`OeHead::params`].
pub fn head_gradient(head: &OeHead, batch: &EmbeddingSet) -> Result<Vec<f64>> {
    let (xs, targets) = head.batch_rows(batch)?;
    let mut grad = vec![0.0; head.params.len()];
    head.loss_and_gradient(&xs, &targets, &mut grad);
    Ok(grad)
}

/// Regularized mean cross-entropy over `batch` (labels are output indices).
pub fn batch_loss(head: &OeHead, batch: &EmbeddingSet) -> Result<f64> {
    let (xs, targets) = head.batch_rows(batch)?;
    let mut grad = vec![0.0; head.params.len()];
    Ok(head.loss_and_gradient(&xs, &targets, &mut grad))
}
