use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Dataset;

/// Isotropic unit-variance Gaussian classes. Class `k` is centred at
/// `k * class_separation` along the unit diagonal, so consecutive means are
/// `class_separation` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_features: 20,
            n_classes: 2,
            class_separation: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
}

/// Generates the dataset and splits it 80/20 by a seed-derived permutation.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SplitDataset> {
    if spec.n_classes < 2 {
        return Err(Error::Domain("need at least two classes".into()));
    }
    if spec.n_classes > spec.n_samples {
        return Err(Error::Domain(format!(
            "{} classes exceed {} samples",
            spec.n_classes, spec.n_samples
        )));
    }
    if spec.n_features == 0 {
        return Err(Error::Domain("need at least one feature".into()));
    }
    if !(spec.class_separation >= 0.0 && spec.class_separation.is_finite()) {
        return Err(Error::Domain("class separation must be finite and >= 0".into()));
    }
    if spec.n_samples < 5 {
        return Err(Error::Domain("need at least 5 samples for an 80/20 split".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let axis = 1.0 / (spec.n_features as f64).sqrt();
    let mut inputs = Vec::with_capacity(spec.n_samples * spec.n_features);
    let labels: Vec<usize> = (0..spec.n_samples).map(|i| i % spec.n_classes).collect();
    for &label in &labels {
        let offset = label as f64 * spec.class_separation * axis;
        for _ in 0..spec.n_features {
            let noise: f64 = StandardNormal.sample(&mut rng);
            inputs.push(offset + noise);
        }
    }
    let all = Dataset::new(inputs, spec.n_features, labels, spec.n_classes)?;

    let mut order: Vec<usize> = (0..spec.n_samples).collect();
    order.shuffle(&mut rng);
    let n_train = spec.n_samples * 4 / 5;
    Ok(SplitDataset {
        train: all.select(&order[..n_train])?,
        test: all.select(&order[n_train..])?,
    })
}
