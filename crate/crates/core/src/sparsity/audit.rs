//! Randomized audit of the six sparsity axioms.
//!
//! D1 Robin Hood, D2 Scaling, D3 Rising Tide, D4 Cloning, P1 Bill Gates and
//! P2 Babies. Strict inequalities tolerate float noise up to
//! [`STRICT_MARGIN`]: a claim `a < b` fails only when `a - b > STRICT_MARGIN`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pq_index, MeasureSpec, NormPair};

pub const STRICT_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Property {
    #[serde(rename = "D1_robin_hood")]
    RobinHood,
    #[serde(rename = "D2_scaling")]
    Scaling,
    #[serde(rename = "D3_rising_tide")]
    RisingTide,
    #[serde(rename = "D4_cloning")]
    Cloning,
    #[serde(rename = "P1_bill_gates")]
    BillGates,
    #[serde(rename = "P2_babies")]
    Babies,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::RobinHood,
        Property::Scaling,
        Property::RisingTide,
        Property::Cloning,
        Property::BillGates,
        Property::Babies,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Property::RobinHood => "D1_robin_hood",
            Property::Scaling => "D2_scaling",
            Property::RisingTide => "D3_rising_tide",
            Property::Cloning => "D4_cloning",
            Property::BillGates => "P1_bill_gates",
            Property::Babies => "P2_babies",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditConfig {
    pub trials: usize,
    pub min_dim: usize,
    pub max_dim: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            min_dim: 2,
            max_dim: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub property: Property,
    pub trials: usize,
    pub violations: usize,
    pub first_counterexample: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub measure: String,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl PropertyReport {
    pub fn total_violations(&self) -> usize {
        self.properties.iter().map(|p| p.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.total_violations() == 0
    }

    pub fn get(&self, property: Property) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.property == property)
    }
}

/// Draws a non-zero magnitude vector whose shape varies between trials.
fn random_vector(rng: &mut ChaCha8Rng, min_dim: usize, max_dim: usize) -> Vec<f64> {
    let d = rng.random_range(min_dim..=max_dim);
    let mut w: Vec<f64> = match rng.random_range(0..4) {
        0 => (0..d).map(|_| rng.random::<f64>()).collect(),
        1 => (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect(),
        2 => (0..d)
            .map(|_| 10f64.powf(rng.random_range(-3.0..3.0)))
            .collect(),
        _ => (0..d)
            .map(|_| {
                if rng.random_bool(0.5) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect(),
    };
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    w
}

fn random_unequal_vector(rng: &mut ChaCha8Rng, min_dim: usize, max_dim: usize) -> Vec<f64> {
    loop {
        let w = random_vector(rng, min_dim.max(2), max_dim.max(2));
        if w.iter().any(|&v| v != w[0]) {
            return w;
        }
    }
}

/// Open-interval draw from `(0, upper)`.
fn open_uniform(rng: &mut ChaCha8Rng, upper: f64) -> f64 {
    loop {
        let a = rng.random::<f64>() * upper;
        if a > 0.0 && a < upper {
            return a;
        }
    }
}

/// Some(value) or None when the measure rejects the vector.
fn eval(measure: &MeasureSpec, w: &[f64]) -> Option<f64> {
    measure.evaluate(w).ok()
}

/// `a < b` up to the strictness margin.
fn strictly_less(a: Option<f64>, b: Option<f64>) -> bool {
    matches!((a, b), (Some(a), Some(b)) if a - b <= STRICT_MARGIN)
}

fn nearly_equal(a: Option<f64>, b: Option<f64>) -> bool {
    matches!((a, b), (Some(a), Some(b)) if (a - b).abs() <= STRICT_MARGIN)
}

/// One randomized instantiation; returns the tested vector and whether the
/// property held.
fn trial(
    property: Property,
    measure: &MeasureSpec,
    rng: &mut ChaCha8Rng,
    cfg: &AuditConfig,
) -> (Vec<f64>, bool) {
    match property {
        Property::RobinHood => {
            let w = random_unequal_vector(rng, cfg.min_dim, cfg.max_dim);
            let (i, j) = loop {
                let i = rng.random_range(0..w.len());
                let j = rng.random_range(0..w.len());
                if w[i] > w[j] {
                    break (i, j);
                }
            };
            let alpha = open_uniform(rng, (w[i] - w[j]) / 2.0);
            let mut moved = w.clone();
            moved[i] -= alpha;
            moved[j] += alpha;
            let ok = strictly_less(eval(measure, &moved), eval(measure, &w));
            (w, ok)
        }
        Property::Scaling => {
            let w = random_vector(rng, cfg.min_dim, cfg.max_dim);
            let alpha = 10f64.powf(rng.random_range(-6.0..6.0));
            let scaled: Vec<f64> = w.iter().map(|v| v * alpha).collect();
            let ok = nearly_equal(eval(measure, &scaled), eval(measure, &w));
            (w, ok)
        }
        Property::RisingTide => {
            let w = random_unequal_vector(rng, cfg.min_dim, cfg.max_dim);
            let top = w.iter().copied().fold(0.0, f64::max);
            let alpha = top * 10f64.powf(rng.random_range(-3.0..2.0));
            let raised: Vec<f64> = w.iter().map(|v| v + alpha).collect();
            let ok = strictly_less(eval(measure, &raised), eval(measure, &w));
            (w, ok)
        }
        Property::Cloning => {
            let w = random_vector(rng, cfg.min_dim, cfg.max_dim);
            let cloned: Vec<f64> = w.iter().chain(w.iter()).copied().collect();
            let ok = nearly_equal(eval(measure, &cloned), eval(measure, &w));
            (w, ok)
        }
        Property::BillGates => {
            let w = random_vector(rng, cfg.min_dim, cfg.max_dim);
            let i = rng.random_range(0..w.len());
            let l1: f64 = w.iter().sum();
            let values: Vec<Option<f64>> = (0..6)
                .map(|k| {
                    let mut v = w.clone();
                    v[i] += l1 * 2f64.powi(k) * 10.0;
                    eval(measure, &v)
                })
                .collect();
            let ok = values.windows(2).all(|pair| strictly_less(pair[0], pair[1]));
            (w, ok)
        }
        Property::Babies => {
            let w = random_vector(rng, cfg.min_dim, cfg.max_dim);
            let mut padded = w.clone();
            padded.push(0.0);
            let ok = strictly_less(eval(measure, &w), eval(measure, &padded));
            (w, ok)
        }
    }
}

/// Runs `cfg.trials` randomized instantiations of each of the six properties.
///
/// Each property draws from its own RNG stream, so adding trials to one
/// property never changes the vectors another property sees.
pub fn audit_measure(measure: &MeasureSpec, cfg: &AuditConfig) -> PropertyReport {
    let properties = Property::ALL
        .iter()
        .enumerate()
        .map(|(stream, &property)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream as u64);
            let mut violations = 0;
            let mut first_counterexample = None;
            for _ in 0..cfg.trials {
                let (w, ok) = trial(property, measure, &mut rng, cfg);
                if !ok {
                    violations += 1;
                    first_counterexample.get_or_insert(w);
                }
            }
            PropertyResult {
                property,
                trials: cfg.trials,
                violations,
                first_counterexample,
            }
        })
        .collect();
    PropertyReport {
        measure: measure.label(),
        seed: cfg.seed,
        properties,
    }
}

/// Outcome of the directed Robin Hood search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum NegativeSearch {
    Found {
        counterexample: Vec<f64>,
        alpha: f64,
        increase: f64,
        candidates_tried: usize,
    },
    Inconclusive {
        candidates_tried: usize,
    },
}

impl NegativeSearch {
    pub fn found(&self) -> bool {
        matches!(self, NegativeSearch::Found { .. })
    }
}

/// Searches for a Robin Hood violation of the PQ Index.
///
/// Candidates are `[1, w2, x, x, ..., x]`: a rich/poor pair followed by `n`
/// equal small coordinates. Outside `0 < p <= 1 < q` a large enough crowd of
/// small coordinates can flip the sign of the index derivative along the
/// transfer, so a transfer from the first to the second entry increases the
/// index. Crowd sizes grow geometrically up to `max_dim - 2`.
pub fn directed_robin_hood_search(norms: NormPair, max_dim: usize) -> NegativeSearch {
    const SECOND: [f64; 4] = [0.9, 0.5, 0.1, 0.01];
    const FRACTIONS: [f64; 4] = [0.01, 0.1, 0.3, 0.49];
    let mut tried = 0;
    let mut crowd = 1;
    while crowd + 2 <= max_dim {
        for &second in &SECOND {
            for step in 0..=16 {
                let small = 10f64.powf(-8.0 + 0.5 * step as f64);
                let mut w = vec![small; crowd + 2];
                w[0] = 1.0;
                w[1] = second;
                let Ok(before) = pq_index(&w, norms) else {
                    continue;
                };
                for &fraction in &FRACTIONS {
                    tried += 1;
                    let alpha = fraction * (1.0 - second);
                    let mut moved = w.clone();
                    moved[0] -= alpha;
                    moved[1] += alpha;
                    if let Ok(after) = pq_index(&moved, norms) {
                        if after - before > STRICT_MARGIN {
                            return NegativeSearch::Found {
                                counterexample: w,
                                alpha,
                                increase: after - before,
                                candidates_tried: tried,
                            };
                        }
                    }
                }
            }
        }
        crowd *= 10;
    }
    NegativeSearch::Inconclusive {
        candidates_tried: tried,
    }
}
