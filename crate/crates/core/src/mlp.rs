//! Feed-forward softmax classifier trained with Adam, written from
//! scratch.
//!
//! The default architecture is `[d_in, 128, 64, n_classes]` with ReLU on
//! the hidden layers and softmax at the output; the hidden sizes are
//! configurable (tests use tiny nets). Training minimises mean
//! categorical cross-entropy with mini-batch Adam, a seeded shuffle per
//! epoch, and early stopping on a validation slice taken from the **end**
//! of the dataset in its original order. The model returned is the
//! final-epoch model, not a best-validation rollback.
//!
//! Everything is deterministic given `(data, config, seed)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::BinLabel;
use crate::predictor::BinPredictor;
use crate::scalar::Real;

/// Probabilities are clamped here before the log in the loss.
pub const CE_PROB_FLOOR: f64 = 1e-12;

/// One fully-connected layer: `out_dim x in_dim` weights (row-major) plus
/// a bias per output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn zeroed(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    /// `z = W a + b` into `out`.
    fn affine(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        for j in 0..self.out_dim {
            let row = &self.weights[j * self.in_dim..(j + 1) * self.in_dim];
            let mut acc = self.bias[j];
            for (w, a) in row.iter().zip(input) {
                acc += *w * *a;
            }
            out.push(acc);
        }
    }
}

/// The classifier: a stack of dense layers, ReLU between them, softmax on
/// the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> MlpModel<T> {
    /// He-style seeded initialisation: weights uniform in
    /// `±sqrt(6 / fan_in)`, biases zero.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(layer_sizes, &mut rng)
    }

    /// As [`MlpModel::init`] but drawing from a caller-owned stream, so a
    /// caller that seeds the same stream reproduces the exact weights.
    pub fn init_with(layer_sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidInput(
                "a network needs at least input and output sizes".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidInput("zero-width layer".into()));
        }
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut layer = Dense::zeroed(fan_in, fan_out);
            for w in &mut layer.weights {
                *w = T::of(rng.random_range(-bound..bound));
            }
            layers.push(layer);
        }
        Ok(MlpModel { layer_sizes: layer_sizes.to_vec(), layers })
    }

    pub fn input_len(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    /// Checks the shape chain and parameter finiteness (used after
    /// deserialisation, which bypasses the constructors).
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layers.len() != self.layer_sizes.len() - 1 {
            return Err(Error::InvalidInput("layer count does not match sizes".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim != self.layer_sizes[i]
                || layer.out_dim != self.layer_sizes[i + 1]
                || layer.weights.len() != layer.in_dim * layer.out_dim
                || layer.bias.len() != layer.out_dim
            {
                return Err(Error::InvalidInput(format!("layer {i} shape mismatch")));
            }
            if layer.weights.iter().chain(&layer.bias).any(|p| !p.is_finite()) {
                return Err(Error::InvalidInput(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// All parameters flattened: per layer, weights row-major then bias.
    pub fn parameters(&self) -> Vec<T> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Inverse of [`MlpModel::parameters`]; the flat length must match.
    pub fn set_parameters(&mut self, flat: &[T]) -> Result<()> {
        let want: usize =
            self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        if flat.len() != want {
            return Err(Error::InvalidInput(format!(
                "expected {want} parameters, got {}",
                flat.len()
            )));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }
}

/// Numerically stable softmax (max subtraction) in place.
fn softmax_in_place<T: Real>(logits: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
}

/// Runs the network, returning the class-probability vector.
pub fn forward<T: Real>(model: &MlpModel<T>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != model.input_len() {
        return Err(Error::InvalidInput(format!(
            "input has {} features, network expects {}",
            x.len(),
            model.input_len()
        )));
    }
    let mut current = x.to_vec();
    let mut next = Vec::new();
    let last = model.layers.len() - 1;
    for (i, layer) in model.layers.iter().enumerate() {
        layer.affine(&current, &mut next);
        if i < last {
            for v in &mut next {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        } else {
            softmax_in_place(&mut next);
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(current)
}

/// Cross-entropy `-ln p_true` with the probability floored at
/// [`CE_PROB_FLOOR`]. `true_class` is the 1-based bin number.
pub fn ce_loss<T: Real>(probs: &[T], true_class: BinLabel) -> Result<T> {
    let idx = true_class.number() as usize;
    if idx > probs.len() {
        return Err(Error::InvalidInput(format!(
            "class {idx} out of range for {} outputs",
            probs.len()
        )));
    }
    Ok(-probs[idx - 1].max(T::of(CE_PROB_FLOOR)).ln())
}

/// Gradient of one dense layer, same shapes as the layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Parameter-shaped gradients of the mean batch cross-entropy, plus the
/// loss itself (the forward pass comes for free).
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradients<T> {
    pub layers: Vec<DenseGrad<T>>,
    pub mean_loss: T,
}

impl<T: Real> MlpGradients<T> {
    fn zeroed(model: &MlpModel<T>) -> Self {
        MlpGradients {
            layers: model
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weights: vec![T::zero(); l.weights.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
            mean_loss: T::zero(),
        }
    }

    /// Flattened in the same order as [`MlpModel::parameters`].
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }
}

/// Analytic gradients of mean cross-entropy over the batch, by
/// backpropagation. `xs` and `labels` pair up one-to-one.
pub fn gradients<T: Real>(
    model: &MlpModel<T>,
    xs: &[Vec<T>],
    labels: &[BinLabel],
) -> Result<MlpGradients<T>> {
    if xs.is_empty() || xs.len() != labels.len() {
        return Err(Error::InvalidInput("batch must be non-empty and aligned".into()));
    }
    let idx: Vec<usize> = (0..xs.len()).collect();
    gradients_indexed(model, xs, labels, &idx)
}

/// As [`gradients`] but over a subset of rows, so the trainer can batch
/// without copying feature vectors.
fn gradients_indexed<T: Real>(
    model: &MlpModel<T>,
    xs: &[Vec<T>],
    labels: &[BinLabel],
    batch: &[usize],
) -> Result<MlpGradients<T>> {
    let mut grads = MlpGradients::zeroed(model);
    let inv_b = T::one() / T::of(batch.len() as f64);
    let n_layers = model.layers.len();
    let mut activations: Vec<Vec<T>> = Vec::with_capacity(n_layers + 1);
    let mut loss_sum = T::zero();

    for &i in batch {
        let x = &xs[i];
        if x.len() != model.input_len() {
            return Err(Error::InvalidInput(format!(
                "sample {i} has {} features, network expects {}",
                x.len(),
                model.input_len()
            )));
        }
        let class = labels[i].number() as usize;
        if class > model.n_classes() {
            return Err(Error::InvalidInput(format!(
                "label {class} exceeds {} classes",
                model.n_classes()
            )));
        }

        // Forward, keeping every activation. ReLU masks can be recovered
        // from the activations (a > 0 iff pre-activation > 0, and the
        // derivative at exactly 0 is taken as 0).
        activations.clear();
        activations.push(x.clone());
        for (l, layer) in model.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&activations[l], &mut z);
            if l < n_layers - 1 {
                for v in &mut z {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            } else {
                softmax_in_place(&mut z);
            }
            activations.push(z);
        }

        let probs = &activations[n_layers];
        loss_sum += -probs[class - 1].max(T::of(CE_PROB_FLOOR)).ln();

        // Softmax + cross-entropy collapse to (p - onehot); scale by 1/B
        // here so accumulation yields the mean-loss gradient directly.
        let mut delta: Vec<T> = probs.iter().map(|&p| p * inv_b).collect();
        delta[class - 1] -= inv_b;

        for l in (0..n_layers).rev() {
            let layer = &model.layers[l];
            let grad = &mut grads.layers[l];
            let input = &activations[l];
            for (j, &dj) in delta.iter().enumerate() {
                grad.bias[j] += dj;
                let row = &mut grad.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += dj * *a;
                }
            }
            if l > 0 {
                let mut prev = vec![T::zero(); layer.in_dim];
                for (j, &dj) in delta.iter().enumerate() {
                    let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += *w * dj;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    if !(*a > T::zero()) {
                        *p = T::zero();
                    }
                }
                delta = prev;
            }
        }
    }
    grads.mean_loss = loss_sum * inv_b;
    Ok(grads)
}

/// Training hyperparameters. Defaults follow the published setup:
/// learning rate 0.00012, batch 32, hidden layers [128, 64], 50 classes,
/// with early stopping on a 10% validation slice (patience 20).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Fraction of the dataset (taken from the end, original order) held
    /// out for early stopping. Zero disables early stopping.
    pub val_fraction: f64,
    /// Epochs without strict validation improvement before stopping.
    pub patience: usize,
    pub hidden: Vec<usize>,
    pub n_classes: usize,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        MlpTrainConfig {
            learning_rate: 0.00012,
            batch_size: 32,
            epochs: 200,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            val_fraction: 0.1,
            patience: 20,
            hidden: vec![128, 64],
            n_classes: 50,
        }
    }
}

impl MlpTrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("need at least one epoch".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidInput("val_fraction must lie in [0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidInput("patience must be at least 1".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidInput("need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(Error::InvalidInput("invalid Adam parameters".into()));
        }
        Ok(())
    }
}

/// Mean losses for one epoch of training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// What [`train`] hands back: the final-epoch model plus bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpTrainOutput<T> {
    pub model: MlpModel<T>,
    pub losses: Vec<EpochLoss>,
    pub stopped_early: bool,
}

/// Renders a loss curve as `epoch,train_loss,val_loss` CSV (empty last
/// field when there is no validation slice).
pub fn loss_curve_to_csv(losses: &[EpochLoss]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for l in losses {
        match l.val_loss {
            Some(v) => {
                let _ = writeln!(out, "{},{},{}", l.epoch, l.train_loss, v);
            }
            None => {
                let _ = writeln!(out, "{},{},", l.epoch, l.train_loss);
            }
        }
    }
    out
}

/// Trains a fresh network with mini-batch Adam.
///
/// The validation slice is the last `val_fraction` of `xs` in its given
/// order; the remainder is shuffled each epoch (seeded). Early stopping
/// fires after `patience` epochs without strict validation improvement,
/// and the model returned is whatever the final executed epoch produced.
pub fn train<T: Real>(
    xs: &[Vec<T>],
    labels: &[BinLabel],
    cfg: &MlpTrainConfig,
) -> Result<MlpTrainOutput<T>> {
    cfg.validate()?;
    if xs.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if xs.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} labels",
            xs.len(),
            labels.len()
        )));
    }
    let d_in = xs[0].len();
    if d_in == 0 || xs.iter().any(|x| x.len() != d_in) {
        return Err(Error::InvalidInput("feature rows must share a positive length".into()));
    }
    if let Some(l) = labels.iter().find(|l| l.number() as usize > cfg.n_classes) {
        return Err(Error::InvalidInput(format!(
            "label {} exceeds {} classes",
            l.number(),
            cfg.n_classes
        )));
    }

    let mut sizes = Vec::with_capacity(cfg.hidden.len() + 2);
    sizes.push(d_in);
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(cfg.n_classes);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::init_with(&sizes, &mut rng)?;

    let n = xs.len();
    let n_val = ((n as f64) * cfg.val_fraction).floor() as usize;
    let n_train = n - n_val;
    let mut train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..n).collect();

    let lr = T::of(cfg.learning_rate);
    let beta1 = T::of(cfg.beta1);
    let beta2 = T::of(cfg.beta2);
    let eps = T::of(cfg.epsilon);
    let one = T::one();

    // Adam first and second moments, flat per layer (weights then bias).
    let mut m: Vec<Vec<T>> = model
        .layers
        .iter()
        .map(|l| vec![T::zero(); l.weights.len() + l.bias.len()])
        .collect();
    let mut v = m.clone();
    let mut t = 0i32;

    let mut losses = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut since_improved = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = T::zero();
        for batch in train_idx.chunks(cfg.batch_size) {
            let grads = gradients_indexed(&model, xs, labels, batch)?;
            loss_sum += grads.mean_loss * T::of(batch.len() as f64);

            t += 1;
            let bc1 = one - beta1.powi(t);
            let bc2 = one - beta2.powi(t);
            for (l, layer) in model.layers.iter_mut().enumerate() {
                let grad = &grads.layers[l];
                let (mw, mb) = m[l].split_at_mut(layer.weights.len());
                let (vw, vb) = v[l].split_at_mut(layer.weights.len());
                adam_step(
                    &mut layer.weights,
                    &grad.weights,
                    mw,
                    vw,
                    lr,
                    beta1,
                    beta2,
                    eps,
                    bc1,
                    bc2,
                );
                adam_step(&mut layer.bias, &grad.bias, mb, vb, lr, beta1, beta2, eps, bc1, bc2);
            }
        }
        let train_loss = (loss_sum / T::of(n_train as f64)).as_f64();

        let val_loss = if val_idx.is_empty() {
            None
        } else {
            let mut sum = T::zero();
            for &i in &val_idx {
                let probs = forward(&model, &xs[i])?;
                sum += ce_loss(&probs, labels[i])?;
            }
            Some((sum / T::of(val_idx.len() as f64)).as_f64())
        };

        losses.push(EpochLoss { epoch, train_loss, val_loss });

        if let Some(vl) = val_loss {
            if vl < best_val {
                best_val = vl;
                since_improved = 0;
            } else {
                since_improved += 1;
                if since_improved >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(MlpTrainOutput { model, losses, stopped_early })
}

#[allow(clippy::too_many_arguments)]
fn adam_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    bias_corr1: T,
    bias_corr2: T,
) {
    let one = T::one();
    for i in 0..params.len() {
        let g = grads[i];
        let g2 = g * g;
        m[i] = beta1 * m[i] + (one - beta1) * g;
        v[i] = beta2 * v[i] + (one - beta2) * g2;
        let m_hat = m[i] / bias_corr1;
        let v_hat = v[i] / bias_corr2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

crate::predictor::value_via_bin!(MlpModel);

impl<T: Real> BinPredictor<T> for MlpModel<T> {
    fn input_len(&self) -> usize {
        MlpModel::input_len(self)
    }

    /// Argmax class; exact ties go to the lowest class index.
    fn predict_bin(&self, features: &[T]) -> Result<BinLabel> {
        let probs = forward(self, features)?;
        let mut best = 0usize;
        for (i, p) in probs.iter().enumerate().skip(1) {
            if *p > probs[best] {
                best = i;
            }
        }
        Ok(BinLabel::of(best as u32 + 1))
    }
}
