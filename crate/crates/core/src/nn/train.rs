use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_mask, Activation, Dataset, DenseLayer, NetworkParams};
use crate::error::{Error, Result};
use crate::pruning::PruningMask;

/// SGD hyper-parameters. [`Default`] gives the full-scale schedule
/// (200 epochs); [`TrainConfig::desk`] shortens it to 5 epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 250,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            nesterov: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            epochs: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Domain("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain(format!(
                "learning rate {} must be >= 0",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Domain(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Domain("weight decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Cosine annealing `base (1 + cos(pi e / E)) / 2`.
pub fn cosine_lr(base: f64, epoch: usize, epochs: usize) -> f64 {
    base * (1.0 + (PI * epoch as f64 / epochs as f64).cos()) / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    /// Same order as [`NetworkParams::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    fn zeros(layers: &[DenseLayer]) -> Self {
        Self {
            weights: layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Activations of every layer; `acts[0]` is the input batch.
fn forward(layers: &[DenseLayer], inputs: &[f64], batch: usize) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(inputs.to_vec());
    for layer in layers {
        let (n_in, n_out) = (layer.spec.in_size, layer.spec.out_size);
        let prev = acts.last().expect("input pushed");
        let mut out = vec![0.0; batch * n_out];
        for b in 0..batch {
            let x = &prev[b * n_in..(b + 1) * n_in];
            let z = &mut out[b * n_out..(b + 1) * n_out];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * n_in..(o + 1) * n_in];
                *zo = layer.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
        }
        if layer.spec.activation == Activation::Relu {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        acts.push(out);
    }
    acts
}

/// Per-sample cross-entropy and softmax probabilities over one row of logits.
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (logits[label] - max);
    (loss, exps.into_iter().map(|e| e / total).collect())
}

/// Mean softmax cross-entropy over the batch and its gradient.
pub fn loss_and_grad(
    params: &NetworkParams,
    inputs: &[f64],
    labels: &[usize],
) -> (f64, Gradients) {
    let layers = params.layers();
    let batch = labels.len();
    let acts = forward(layers, inputs, batch);
    let classes = layers.last().expect("non-empty network").spec.out_size;
    let logits = acts.last().expect("output layer");

    let mut loss = 0.0;
    let mut delta = vec![0.0; batch * classes];
    let scale = 1.0 / batch as f64;
    for (b, &label) in labels.iter().enumerate() {
        let (l, probs) = softmax_xent(&logits[b * classes..(b + 1) * classes], label);
        loss += l;
        for (k, p) in probs.into_iter().enumerate() {
            let target = if k == label { 1.0 } else { 0.0 };
            delta[b * classes + k] = (p - target) * scale;
        }
    }
    loss *= scale;

    let mut grads = Gradients::zeros(layers);
    for (l, layer) in layers.iter().enumerate().rev() {
        let (n_in, n_out) = (layer.spec.in_size, layer.spec.out_size);
        let input = &acts[l];
        let gw = &mut grads.weights[l];
        let gb = &mut grads.bias[l];
        for b in 0..batch {
            let x = &input[b * n_in..(b + 1) * n_in];
            for o in 0..n_out {
                let d = delta[b * n_out + o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, v) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *g += d * v;
                }
            }
        }
        if l == 0 {
            break;
        }
        let mut prev_delta = vec![0.0; batch * n_in];
        for b in 0..batch {
            let pd = &mut prev_delta[b * n_in..(b + 1) * n_in];
            for o in 0..n_out {
                let d = delta[b * n_out + o];
                if d == 0.0 {
                    continue;
                }
                for (p, w) in pd.iter_mut().zip(&layer.weights[o * n_in..(o + 1) * n_in]) {
                    *p += d * w;
                }
            }
        }
        if layers[l - 1].spec.activation == Activation::Relu {
            for (p, a) in prev_delta.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
        }
        delta = prev_delta;
    }
    (loss, grads)
}

/// Momentum buffers for every parameter tensor.
struct Sgd {
    weights: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

fn sgd_step(param: &mut [f64], grad: &[f64], buf: &mut [f64], lr: f64, cfg: &TrainConfig) {
    for ((w, &g), m) in param.iter_mut().zip(grad).zip(buf.iter_mut()) {
        let g = g + cfg.weight_decay * *w;
        *m = cfg.momentum * *m + g;
        let step = if cfg.nesterov { g + cfg.momentum * *m } else { *m };
        *w -= lr * step;
    }
}

/// Mini-batch SGD on softmax cross-entropy with masked weights frozen at zero.
///
/// Each epoch visits the data in a permutation drawn from a ChaCha stream
/// keyed on `(cfg.seed, epoch)`.
pub fn train(
    params: &NetworkParams,
    mask: &PruningMask,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<NetworkParams> {
    cfg.validate()?;
    check_input(params, data)?;
    let mut net = params.masked(mask)?;
    let mut opt = Sgd {
        weights: net.layers().iter().map(|l| vec![0.0; l.weights.len()]).collect(),
        bias: net.layers().iter().map(|l| vec![0.0; l.bias.len()]).collect(),
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let features = data.n_features();
    let mut batch_inputs = Vec::with_capacity(cfg.batch_size * features);
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.learning_rate, epoch, cfg.epochs);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch_inputs.clear();
            batch_labels.clear();
            for &i in chunk {
                batch_inputs.extend_from_slice(data.sample(i));
                batch_labels.push(data.labels()[i]);
            }
            let (loss, mut grads) = loss_and_grad(&net, &batch_inputs, &batch_labels);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                let keep = mask.layer(l);
                apply_mask(&mut grads.weights[l], keep);
                sgd_step(&mut layer.weights, &grads.weights[l], &mut opt.weights[l], lr, cfg);
                sgd_step(&mut layer.bias, &grads.bias[l], &mut opt.bias[l], lr, cfg);
                apply_mask(&mut layer.weights, keep);
            }
        }
    }
    Ok(net)
}

fn check_input(params: &NetworkParams, data: &Dataset) -> Result<()> {
    let layers = params.layers();
    let first = layers.first().expect("validated network").spec;
    let last = layers.last().expect("validated network").spec;
    if first.in_size != data.n_features() {
        return Err(Error::Shape(format!(
            "network expects {} features, dataset has {}",
            first.in_size,
            data.n_features()
        )));
    }
    if last.out_size < data.n_classes() {
        return Err(Error::Shape(format!(
            "network emits {} classes, dataset has {}",
            last.out_size,
            data.n_classes()
        )));
    }
    Ok(())
}

/// Accuracy (argmax, ties to the lowest class) and mean cross-entropy of
/// `params ⊙ mask`.
pub fn evaluate(params: &NetworkParams, mask: &PruningMask, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
    }
    check_input(params, data)?;
    let net = params.masked(mask)?;
    let classes = net.layers().last().expect("validated network").spec.out_size;
    let features = data.n_features();
    const CHUNK: usize = 1024;
    let (mut correct, mut loss) = (0usize, 0.0);
    for start in (0..data.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(data.len());
        let acts = forward(
            net.layers(),
            &data.inputs()[start * features..end * features],
            end - start,
        );
        let logits = acts.last().expect("output layer");
        for (b, &label) in data.labels()[start..end].iter().enumerate() {
            let row = &logits[b * classes..(b + 1) * classes];
            let mut best = 0;
            for (k, &z) in row.iter().enumerate() {
                if z > row[best] {
                    best = k;
                }
            }
            if best == label {
                correct += 1;
            }
            loss += softmax_xent(row, label).0;
        }
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
    })
}
