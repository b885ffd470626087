//! Dense feed-forward networks with a masked SGD trainer.

mod train;

pub use train::{
    cosine_lr, evaluate, loss_and_grad, train, Evaluation, Gradients, TrainConfig,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruning::PruningMask;
use crate::sparsity::MagnitudeVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_size: usize,
    pub out_size: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(in_size: usize, out_size: usize, activation: Activation) -> Self {
        Self {
            in_size,
            out_size,
            activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp,
}

impl ModelKind {
    /// Layer stack for `inputs` features and `classes` outputs.
    ///
    /// The MLP is `in -> 128 -> 256 -> K` with ReLU after each hidden layer.
    pub fn layers(&self, inputs: usize, classes: usize) -> Vec<LayerSpec> {
        match self {
            ModelKind::Linear => vec![LayerSpec::dense(inputs, classes, Activation::None)],
            ModelKind::Mlp => vec![
                LayerSpec::dense(inputs, 128, Activation::Relu),
                LayerSpec::dense(128, 256, Activation::Relu),
                LayerSpec::dense(256, classes, Activation::None),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub spec: LayerSpec,
    /// Row-major `out_size x in_size`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.spec.in_size + col]
    }
}

/// Network parameters plus the snapshot they were initialised from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    layers: Vec<DenseLayer>,
    init: Vec<DenseLayer>,
}

fn validate_spec(spec: &[LayerSpec]) -> Result<()> {
    let Some(last) = spec.last() else {
        return Err(Error::Shape("network has no layers".into()));
    };
    if let Some((i, l)) = spec
        .iter()
        .enumerate()
        .find(|(_, l)| l.in_size == 0 || l.out_size == 0)
    {
        return Err(Error::Shape(format!("layer {i} has a zero dimension: {l:?}")));
    }
    for (i, pair) in spec.windows(2).enumerate() {
        if pair[0].out_size != pair[1].in_size {
            return Err(Error::Shape(format!(
                "layer {i} outputs {} but layer {} expects {}",
                pair[0].out_size,
                i + 1,
                pair[1].in_size
            )));
        }
    }
    if last.activation != Activation::None {
        return Err(Error::Shape("final layer must emit raw logits".into()));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
pub fn init_network(spec: &[LayerSpec], seed: u64) -> Result<NetworkParams> {
    validate_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Shuffling uses streams 0..epochs of the same seed.
    rng.set_stream(u64::MAX);
    let layers: Vec<DenseLayer> = spec
        .iter()
        .map(|&s| {
            let limit = (6.0 / (s.in_size + s.out_size) as f64).sqrt();
            let weights = (0..s.in_size * s.out_size)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            DenseLayer {
                spec: s,
                weights,
                bias: vec![0.0; s.out_size],
            }
        })
        .collect();
    Ok(NetworkParams {
        init: layers.clone(),
        layers,
    })
}

impl NetworkParams {
    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// The parameters as first initialised (`w_init`).
    pub fn init_snapshot(&self) -> &[DenseLayer] {
        &self.init
    }

    pub fn spec(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// `(out_size, in_size)` of every weight matrix.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.spec.out_size, l.spec.in_size))
            .collect()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn full_mask(&self) -> PruningMask {
        PruningMask::full(&self.weight_shapes())
    }

    /// Every weight and bias, layer by layer with weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    /// Copy with the values of [`NetworkParams::flat_params`] replaced.
    pub fn with_flat_params(&self, values: &[f64]) -> Result<NetworkParams> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut out = self.clone();
        let mut rest = values;
        for layer in &mut out.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.weights.copy_from_slice(w);
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(out)
    }

    /// `w_init ⊙ mask`; the snapshot carries over unchanged.
    pub fn rewind(&self, mask: &PruningMask) -> Result<NetworkParams> {
        mask.check_shapes(&self.weight_shapes())?;
        let mut layers = self.init.clone();
        for (l, layer) in layers.iter_mut().enumerate() {
            apply_mask(&mut layer.weights, mask.layer(l));
        }
        Ok(NetworkParams {
            layers,
            init: self.init.clone(),
        })
    }

    /// Copy with masked weights zeroed.
    pub fn masked(&self, mask: &PruningMask) -> Result<NetworkParams> {
        mask.check_shapes(&self.weight_shapes())?;
        let mut out = self.clone();
        for (l, layer) in out.layers.iter_mut().enumerate() {
            apply_mask(&mut layer.weights, mask.layer(l));
        }
        Ok(out)
    }

    /// Magnitudes of every weight kept by `mask`, in layer-major row-major order.
    pub fn surviving_magnitudes(&self, mask: &PruningMask) -> Vec<f64> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| {
                layer
                    .weights
                    .iter()
                    .zip(mask.layer(l))
                    .filter(|(_, &keep)| keep)
                    .map(|(w, _)| w.abs())
            })
            .collect()
    }
}

pub(crate) fn apply_mask(weights: &mut [f64], keep: &[bool]) {
    for (w, &k) in weights.iter_mut().zip(keep) {
        if !k {
            *w = 0.0;
        }
    }
}

/// Position of a weight inside the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeightPosition {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
}

/// Maps flat indices of [`flatten_prunable`] to weight positions and back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
}

impl IndexMap {
    pub fn new(shapes: Vec<(usize, usize)>) -> Self {
        let mut offsets = Vec::with_capacity(shapes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &(rows, cols) in &shapes {
            acc += rows * cols;
            offsets.push(acc);
        }
        Self { shapes, offsets }
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, flat: usize) -> Option<WeightPosition> {
        if flat >= self.len() {
            return None;
        }
        let layer = self.offsets.partition_point(|&o| o <= flat) - 1;
        let local = flat - self.offsets[layer];
        let cols = self.shapes[layer].1;
        Some(WeightPosition {
            layer,
            row: local / cols,
            col: local % cols,
        })
    }

    pub fn flat_index(&self, pos: WeightPosition) -> Option<usize> {
        let &(rows, cols) = self.shapes.get(pos.layer)?;
        if pos.row >= rows || pos.col >= cols {
            return None;
        }
        Some(self.offsets[pos.layer] + pos.row * cols + pos.col)
    }
}

/// Absolute values of all weights (biases excluded) with their index map.
pub fn flatten_prunable(params: &NetworkParams) -> (MagnitudeVector, IndexMap) {
    let values: Vec<f64> = params
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().map(|w| w.abs()))
        .collect();
    let map = IndexMap::new(params.weight_shapes());
    // Weights are finite by construction and the spec guarantees >= 1 layer.
    let magnitudes = MagnitudeVector::new(values).expect("network weights are finite");
    (magnitudes, map)
}

/// Row-major inputs with integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    inputs: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Domain("dataset is empty".into()));
        }
        if n_features == 0 || inputs.len() != labels.len() * n_features {
            return Err(Error::Shape(format!(
                "{} inputs for {} samples of {n_features} features",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Domain(format!(
                "label {bad} outside [0, {n_classes})"
            )));
        }
        Ok(Self {
            inputs,
            n_features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_features..(i + 1) * self.n_features]
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let mut inputs = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            inputs.extend_from_slice(self.sample(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(inputs, self.n_features, labels, self.n_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let spec = ModelKind::Mlp.layers(20, 2);
        let a = init_network(&spec, 7).unwrap();
        let b = init_network(&spec, 7).unwrap();
        let bits = |p: &NetworkParams| -> Vec<u64> {
            p.layers()
                .iter()
                .flat_map(|l| l.weights.iter().map(|w| w.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&init_network(&spec, 8).unwrap()));
    }

    #[test]
    fn table_sizes() {
        let mlp = init_network(&ModelKind::Mlp.layers(784, 10), 0).unwrap();
        assert_eq!(mlp.weight_count(), 135_680);
        assert_eq!(mlp.param_count(), 136_074);
        let linear = init_network(&ModelKind::Linear.layers(784, 10), 0).unwrap();
        assert_eq!(linear.param_count(), 7_850);
    }

    #[test]
    fn init_respects_glorot_limit() {
        let p = init_network(&[LayerSpec::dense(30, 10, Activation::None)], 1).unwrap();
        let limit = (6.0f64 / 40.0).sqrt();
        assert!(p.layers()[0].weights.iter().all(|w| w.abs() < limit));
        assert!(p.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_rejects_bad_specs() {
        assert!(init_network(&[], 0).is_err());
        let broken = [
            LayerSpec::dense(4, 3, Activation::Relu),
            LayerSpec::dense(5, 2, Activation::None),
        ];
        assert!(matches!(init_network(&broken, 0), Err(Error::Shape(_))));
        let relu_out = [LayerSpec::dense(4, 3, Activation::Relu)];
        assert!(init_network(&relu_out, 0).is_err());
    }

    #[test]
    fn rewind_cases() {
        let p = init_network(&ModelKind::Mlp.layers(6, 3), 3).unwrap();
        let full = p.full_mask();
        assert_eq!(p.rewind(&full).unwrap().layers(), p.init_snapshot());

        let mut first = full.clone();
        first.drop_entry(0, 0);
        let r = p.rewind(&first).unwrap();
        assert_eq!(r.layers()[0].weights[0], 0.0);
        assert_eq!(&r.layers()[0].weights[1..], &p.init_snapshot()[0].weights[1..]);
        assert_eq!(&r.layers()[1..], &p.init_snapshot()[1..]);

        let mut layer1 = full.clone();
        for i in 0..128 * 256 {
            layer1.drop_entry(1, i);
        }
        let r = p.rewind(&layer1).unwrap();
        assert!(r.layers()[1].weights.iter().all(|&w| w == 0.0));

        let wrong = PruningMask::full(&[(1, 1)]);
        assert!(matches!(p.rewind(&wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn flatten_lengths_and_map() {
        let p = init_network(&ModelKind::Mlp.layers(784, 10), 0).unwrap();
        let (mags, map) = flatten_prunable(&p);
        assert_eq!(mags.len(), 135_680);
        assert_eq!(map.len(), 135_680);
        for flat in [0, 1, 783, 784, 100_351, 100_352, 135_679] {
            let pos = map.position(flat).unwrap();
            assert_eq!(map.flat_index(pos), Some(flat));
            let w = p.layers()[pos.layer].weight(pos.row, pos.col);
            assert_eq!(mags.as_slice()[flat], w.abs());
        }
        assert_eq!(map.position(135_680), None);
        assert_eq!(
            map.position(784 * 128),
            Some(WeightPosition { layer: 1, row: 0, col: 0 })
        );
    }

    #[test]
    fn flatten_takes_absolute_values() {
        let mut p = init_network(&[LayerSpec::dense(2, 2, Activation::None)], 0).unwrap();
        p.layers_mut()[0].weights[3] = -0.7;
        let (mags, map) = flatten_prunable(&p);
        let flat = map
            .flat_index(WeightPosition { layer: 0, row: 1, col: 1 })
            .unwrap();
        assert_eq!(mags.as_slice()[flat], 0.7);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], 2, vec![], 2).is_err());
        assert!(Dataset::new(vec![0.0; 3], 2, vec![0, 1], 2).is_err());
        assert!(Dataset::new(vec![0.0; 4], 2, vec![0, 2], 2).is_err());
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![0, 1], 2).unwrap();
        assert_eq!(d.sample(1), &[3.0, 4.0]);
        let s = d.select(&[1, 1, 0]).unwrap();
        assert_eq!(s.labels(), &[1, 1, 0]);
    }
}
