//! From-scratch differentiable models over flat parameter vectors.
//!
//! Three model kinds share one code path: a stack of affine layers with tanh
//! on every layer except the last. Classifiers (logistic regression is the
//! zero-hidden-layer case) end in softmax cross-entropy; autoencoders end in
//! a linear layer trained with mean squared error against their own input.
//! Losses are means over the batch, so gradients do not scale with batch
//! size. All gradients are analytic and are pinned to a central
//! finite-difference oracle in the test suite.

use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::linalg::{affine, backprop_inputs, grad_bias, grad_weights, Matrix};
use crate::params::{ParamLayout, ParamVector};
use crate::seed;
use crate::{Error, Result};

/// Which head (and loss) the layer stack ends in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Single affine layer + softmax cross-entropy.
    LogisticRegression,
    /// tanh hidden layers + softmax cross-entropy.
    MlpClassifier,
    /// tanh hidden layers + linear output trained with MSE against the input.
    MlpAutoencoder,
}

/// Architecture description; induces the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    /// Name of the block sliced out of updates as the anomaly probe.
    pub probe_block: String,
}

/// A batch of inputs plus (for classifiers) integer labels.
#[derive(Debug, Clone)]
pub struct Batch {
    inputs: Matrix,
    labels: Vec<usize>,
}

/// Test-set quality: argmax accuracy and mean loss.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub loss: f64,
}

impl Batch {
    /// Labels may be empty (autoencoder batches) or one per row.
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if !labels.is_empty() && labels.len() != inputs.rows() {
            return Err(Error::ShapeMismatch {
                what: "batch labels",
                got: labels.len(),
                expected: inputs.rows(),
            });
        }
        Ok(Self { inputs, labels })
    }

    /// An unlabelled batch from raw feature rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The sub-batch at the given row indices.
    pub fn select(&self, idx: &[usize]) -> Batch {
        let labels = if self.labels.is_empty() {
            Vec::new()
        } else {
            idx.iter().map(|&i| self.labels[i]).collect()
        };
        Batch {
            inputs: self.inputs.select_rows(idx),
            labels,
        }
    }
}

impl ModelSpec {
    pub fn logistic_regression(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            input_dim,
            hidden_dims: Vec::new(),
            output_dim: num_classes,
            probe_block: "w".into(),
        }
    }

    pub fn mlp_classifier(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        let probe_block = format!("w{}", hidden_dims.len().saturating_sub(1));
        Self {
            kind: ModelKind::MlpClassifier,
            input_dim,
            hidden_dims,
            output_dim: num_classes,
            probe_block,
        }
    }

    /// The anomaly-detector architecture for a probe of the given width:
    /// one tanh hidden layer of width `max(4, dim/4)` and a linear output.
    pub fn autoencoder_for(probe_dim: usize) -> Self {
        Self {
            kind: ModelKind::MlpAutoencoder,
            input_dim: probe_dim,
            hidden_dims: vec![(probe_dim / 4).max(4)],
            output_dim: probe_dim,
            probe_block: "w0".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(
                "model dims must be positive".into(),
            ));
        }
        match self.kind {
            ModelKind::LogisticRegression => {
                if !self.hidden_dims.is_empty() {
                    return Err(Error::InvalidArgument(
                        "logistic regression takes no hidden layers".into(),
                    ));
                }
            }
            ModelKind::MlpClassifier | ModelKind::MlpAutoencoder => {
                if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
                    return Err(Error::InvalidArgument(
                        "mlp hidden layers must be non-empty and positive".into(),
                    ));
                }
            }
        }
        if self.kind == ModelKind::MlpAutoencoder && self.output_dim != self.input_dim {
            return Err(Error::InvalidArgument(
                "autoencoder output dim must equal input dim".into(),
            ));
        }
        if self.layout().block(&self.probe_block).is_none() {
            return Err(Error::UnknownBlock(self.probe_block.clone()));
        }
        Ok(())
    }

    /// (fan_in, fan_out) of each affine layer, first to last.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// (weight, bias) block names per layer. Logistic regression keeps the
    /// plain "w"/"b" names; stacked models index per layer.
    fn block_names(&self) -> Vec<(String, String)> {
        if self.kind == ModelKind::LogisticRegression {
            vec![("w".into(), "b".into())]
        } else {
            (0..=self.hidden_dims.len())
                .map(|l| (format!("w{l}"), format!("b{l}")))
                .collect()
        }
    }

    /// The induced parameter layout: per layer, a row-major (fan_in x
    /// fan_out) weight block followed by a fan_out bias block.
    pub fn layout(&self) -> Arc<ParamLayout> {
        let names = self.block_names();
        let mut blocks = Vec::with_capacity(names.len() * 2);
        for ((w, b), (fan_in, fan_out)) in names.iter().zip(self.layer_dims()) {
            blocks.push((w.as_str(), fan_in * fan_out));
            blocks.push((b.as_str(), fan_out));
        }
        Arc::new(ParamLayout::new(
            &blocks.iter().map(|(n, l)| (*n, *l)).collect::<Vec<_>>(),
        ))
    }

    pub fn num_params(&self) -> usize {
        self.layout().total_len()
    }

    /// Glorot-uniform weights (s = sqrt(6 / (fan_in + fan_out))), zero
    /// biases. Identical seeds yield bit-identical vectors.
    pub fn init_params(&self, seed_value: u64) -> ParamVector {
        let layout = self.layout();
        let mut params = ParamVector::zeros(layout);
        let mut rng = seed::rng(seed_value);
        for ((wname, _), (fan_in, fan_out)) in self.block_names().iter().zip(self.layer_dims()) {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-s, s);
            for v in params.block_mut(wname).expect("layout block") {
                *v = dist.sample(&mut rng);
            }
        }
        params
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::ShapeMismatch {
                what: "params",
                got: params.len(),
                expected: self.num_params(),
            });
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch, need_labels: bool) -> Result<()> {
        if batch.inputs.cols() != self.input_dim {
            return Err(Error::ShapeMismatch {
                what: "batch features",
                got: batch.inputs.cols(),
                expected: self.input_dim,
            });
        }
        if need_labels {
            if batch.labels.len() != batch.len() {
                return Err(Error::ShapeMismatch {
                    what: "batch labels",
                    got: batch.labels.len(),
                    expected: batch.len(),
                });
            }
            if let Some(&bad) = batch.labels.iter().find(|&&y| y >= self.output_dim) {
                return Err(Error::InvalidArgument(format!(
                    "label {bad} out of range for {} classes",
                    self.output_dim
                )));
            }
        }
        Ok(())
    }

    fn needs_labels(&self) -> bool {
        self.kind != ModelKind::MlpAutoencoder
    }

    /// Forward pass: activations per layer (index 0 is the input) and the
    /// final pre-activation output.
    fn forward(&self, params: &ParamVector, inputs: &Matrix) -> (Vec<Matrix>, Matrix) {
        let names = self.block_names();
        let dims = self.layer_dims();
        let last = names.len() - 1;
        let mut acts = Vec::with_capacity(last + 1);
        acts.push(inputs.clone());
        for l in 0..last {
            let w = params.block(&names[l].0).expect("layout block");
            let b = params.block(&names[l].1).expect("layout block");
            let mut z = affine(acts.last().unwrap(), w, b, dims[l].1);
            for r in 0..z.rows() {
                for v in z.row_mut(r) {
                    *v = v.tanh();
                }
            }
            acts.push(z);
        }
        let w = params.block(&names[last].0).expect("layout block");
        let b = params.block(&names[last].1).expect("layout block");
        let out = affine(acts.last().unwrap(), w, b, dims[last].1);
        (acts, out)
    }

    /// Row-stable softmax probabilities and mean cross-entropy loss.
    fn softmax_loss(&self, logits: &Matrix, labels: &[usize]) -> (Matrix, f64) {
        let n = logits.rows();
        let mut probs = logits.clone();
        let mut loss = 0.0;
        for r in 0..n {
            let row = probs.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            // ln p_y = z_y - max - ln(sum of shifted exps). Floor the
            // probability at the smallest normal float so a diverged model
            // reports an astronomically bad but still finite loss.
            loss -= (row[labels[r]] / sum).max(f64::MIN_POSITIVE).ln();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        (probs, loss / n as f64)
    }

    /// Mean loss of `params` on `batch` (cross-entropy or reconstruction MSE).
    pub fn loss(&self, params: &ParamVector, batch: &Batch) -> Result<f64> {
        self.check_params(params)?;
        self.check_batch(batch, self.needs_labels())?;
        let (_, out) = self.forward(params, &batch.inputs);
        Ok(match self.kind {
            ModelKind::MlpAutoencoder => mse(&out, &batch.inputs),
            _ => self.softmax_loss(&out, &batch.labels).1,
        })
    }

    /// Mean loss and its analytic gradient with the same layout as `params`.
    pub fn loss_and_grad(&self, params: &ParamVector, batch: &Batch) -> Result<(f64, ParamVector)> {
        self.check_params(params)?;
        self.check_batch(batch, self.needs_labels())?;
        let names = self.block_names();
        let (acts, out) = self.forward(params, &batch.inputs);
        let n = batch.len();

        // Output-layer error term, already divided by the batch size.
        let (loss, mut delta) = match self.kind {
            ModelKind::MlpAutoencoder => {
                let loss = mse(&out, &batch.inputs);
                let scale = 2.0 / (n * self.output_dim) as f64;
                let mut d = out;
                for r in 0..n {
                    let x = batch.inputs.row(r);
                    for (dv, xv) in d.row_mut(r).iter_mut().zip(x) {
                        *dv = (*dv - xv) * scale;
                    }
                }
                (loss, d)
            }
            _ => {
                let (mut probs, loss) = self.softmax_loss(&out, &batch.labels);
                let scale = 1.0 / n as f64;
                for r in 0..n {
                    let y = batch.labels[r];
                    let row = probs.row_mut(r);
                    row[y] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
                (loss, probs)
            }
        };

        let mut grad = ParamVector::zeros(params.layout().clone());
        for l in (0..names.len()).rev() {
            grad_weights(&acts[l], &delta, grad.block_mut(&names[l].0)?);
            grad_bias(&delta, grad.block_mut(&names[l].1)?);
            if l > 0 {
                let w = params.block(&names[l].0)?;
                let mut da = backprop_inputs(&delta, w, acts[l].cols());
                // tanh'(z) = 1 - tanh(z)^2, and acts[l] stores tanh(z).
                for r in 0..da.rows() {
                    for (dv, av) in da.row_mut(r).iter_mut().zip(acts[l].row(r)) {
                        *dv *= 1.0 - av * av;
                    }
                }
                delta = da;
            }
        }
        Ok((loss, grad))
    }

    /// One epoch of mini-batch SGD: a seeded shuffle of the rows, then one
    /// gradient step per chunk. `batch_size >= n` takes exactly one
    /// full-batch step over the rows in their given order.
    pub fn sgd_epoch(
        &self,
        params: &ParamVector,
        data: &Batch,
        lr: f64,
        batch_size: usize,
        seed_value: u64,
    ) -> Result<ParamVector> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::InvalidArgument(format!("bad learning rate {lr}")));
        }
        self.check_params(params)?;
        self.check_batch(data, self.needs_labels())?;
        let mut params = params.clone();
        if batch_size >= data.len() {
            let (_, grad) = self.loss_and_grad(&params, data)?;
            params.axpy(-lr, &grad);
            return Ok(params);
        }
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut seed::rng(seed_value));
        for chunk in idx.chunks(batch_size) {
            let sub = data.select(chunk);
            let (_, grad) = self.loss_and_grad(&params, &sub)?;
            params.axpy(-lr, &grad);
        }
        Ok(params)
    }

    /// Argmax class per row; ties resolve to the lowest class id.
    pub fn predict(&self, params: &ParamVector, inputs: &Matrix) -> Result<Vec<usize>> {
        if self.kind == ModelKind::MlpAutoencoder {
            return Err(Error::InvalidArgument(
                "autoencoders do not classify".into(),
            ));
        }
        self.check_params(params)?;
        let (_, out) = self.forward(params, inputs);
        Ok((0..out.rows())
            .map(|r| {
                let row = out.row(r);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    /// Accuracy and mean loss on a labelled batch.
    pub fn evaluate(&self, params: &ParamVector, batch: &Batch) -> Result<EvalReport> {
        if self.kind == ModelKind::MlpAutoencoder {
            return Err(Error::InvalidArgument(
                "autoencoders do not classify".into(),
            ));
        }
        self.check_params(params)?;
        self.check_batch(batch, true)?;
        let (_, out) = self.forward(params, &batch.inputs);
        let (_, loss) = self.softmax_loss(&out, &batch.labels);
        let mut correct = 0;
        for r in 0..out.rows() {
            let row = out.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            if best == batch.labels[r] {
                correct += 1;
            }
        }
        Ok(EvalReport {
            accuracy: correct as f64 / batch.len() as f64,
            loss,
        })
    }
}

/// Mean squared error over all elements of two equal-shape matrices.
fn mse(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.data().len();
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n as f64
}
