//! Experiment configuration as a flat `key = value` text file.
//!
//! ```text
//! # comments start with '#'
//! model = mlp
//! dataset.kind = synthetic
//! algorithm.kinds = sap, lottery_ticket
//! sap.gamma = 1
//! seeds = 0, 1, 2, 3
//! ```
//!
//! Unknown or repeated keys are rejected. Missing keys keep their defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{gen_synthetic, load_idx, SplitDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, ModelKind, TrainConfig};
use crate::pruning::{AlgorithmKind, AlgorithmSpec, CountBasis, SapHyperParams, Scope};
use crate::sparsity::NormPair;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl DatasetSource {
    pub fn load(&self) -> Result<SplitDataset> {
        match self {
            DatasetSource::Synthetic(spec) => gen_synthetic(spec),
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                let train = load_idx(train_images, train_labels)?;
                let test = load_idx(test_images, test_labels)?;
                if train.n_features() != test.n_features() {
                    return Err(Error::Config(format!(
                        "train images have {} features, test images {}",
                        train.n_features(),
                        test.n_features()
                    )));
                }
                Ok(SplitDataset { train, test })
            }
        }
    }
}

/// Which algorithms to run; they share `iterations`, `ratio` and the SAP
/// hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmName {
    OneShot,
    LotteryTicket,
    Sap,
}

impl AlgorithmName {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmName::OneShot => "one_shot",
            AlgorithmName::LotteryTicket => "lottery_ticket",
            AlgorithmName::Sap => "sap",
        }
    }
}

impl FromStr for AlgorithmName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "one_shot" => Ok(Self::OneShot),
            "lottery_ticket" => Ok(Self::LotteryTicket),
            "sap" => Ok(Self::Sap),
            _ => Err(format!("unknown algorithm {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub dataset: DatasetSource,
    pub algorithms: Vec<AlgorithmName>,
    pub iterations: usize,
    /// `P` for One Shot and Lottery Ticket.
    pub ratio: f64,
    pub count_basis: CountBasis,
    pub sap: SapHyperParams,
    pub scope: Scope,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Concurrent cells; 0 uses every available core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Mlp,
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
            algorithms: vec![AlgorithmName::Sap, AlgorithmName::LotteryTicket],
            iterations: 10,
            ratio: 0.2,
            count_basis: CountBasis::Current,
            sap: SapHyperParams::default(),
            scope: Scope::Global,
            train: TrainConfig::desk(),
            seeds: vec![0, 1, 2, 3],
            output_dir: PathBuf::from("runs"),
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn algorithm_specs(&self) -> Vec<AlgorithmSpec> {
        self.algorithms
            .iter()
            .map(|name| {
                let kind = match name {
                    AlgorithmName::OneShot => AlgorithmKind::OneShot {
                        ratio: self.ratio,
                        basis: self.count_basis,
                    },
                    AlgorithmName::LotteryTicket => AlgorithmKind::LotteryTicket {
                        ratio: self.ratio,
                        basis: self.count_basis,
                    },
                    AlgorithmName::Sap => AlgorithmKind::Sap(self.sap),
                };
                AlgorithmSpec {
                    kind,
                    iterations: self.iterations,
                }
            })
            .collect()
    }

    pub fn layers(&self, data: &SplitDataset) -> Vec<LayerSpec> {
        self.model
            .layers(data.train.n_features(), data.train.n_classes().max(data.test.n_classes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithm.kinds is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds is empty".into()));
        }
        let mut names: Vec<_> = self.algorithms.iter().map(|a| a.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.algorithms.len() {
            return Err(Error::Config("algorithm.kinds lists a name twice".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds lists a seed twice".into()));
        }
        for spec in self.algorithm_specs() {
            spec.validate()?;
        }
        self.train.validate()
    }

    /// Serializes every key; `to_text().parse()` gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("model", model_name(self.model).into());
        match &self.dataset {
            DatasetSource::Synthetic(s) => {
                put("dataset.kind", "synthetic".into());
                put("dataset.n_samples", s.n_samples.to_string());
                put("dataset.n_features", s.n_features.to_string());
                put("dataset.n_classes", s.n_classes.to_string());
                put("dataset.class_separation", s.class_separation.to_string());
                put("dataset.seed", s.seed.to_string());
            }
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                put("dataset.kind", "idx".into());
                put("dataset.train_images", train_images.display().to_string());
                put("dataset.train_labels", train_labels.display().to_string());
                put("dataset.test_images", test_images.display().to_string());
                put("dataset.test_labels", test_labels.display().to_string());
            }
        }
        let kinds: Vec<_> = self.algorithms.iter().map(|a| a.as_str()).collect();
        put("algorithm.kinds", kinds.join(", "));
        put("algorithm.iterations", self.iterations.to_string());
        put("algorithm.ratio", self.ratio.to_string());
        put("algorithm.count_basis", basis_name(self.count_basis).into());
        put("sap.p", self.sap.norms.p().to_string());
        put("sap.q", self.sap.norms.q().to_string());
        put("sap.eta", self.sap.eta.to_string());
        put("sap.gamma", self.sap.gamma.to_string());
        put("sap.beta", self.sap.beta.to_string());
        put("scope", self.scope.name().into());
        put("train.epochs", self.train.epochs.to_string());
        put("train.batch_size", self.train.batch_size.to_string());
        put("train.learning_rate", self.train.learning_rate.to_string());
        put("train.momentum", self.train.momentum.to_string());
        put("train.weight_decay", self.train.weight_decay.to_string());
        put("train.nesterov", self.train.nesterov.to_string());
        let seeds: Vec<_> = self.seeds.iter().map(u64::to_string).collect();
        put("seeds", seeds.join(", "));
        put("output_dir", self.output_dir.display().to_string());
        put("workers", self.workers.to_string());
        out
    }
}

fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Linear => "linear",
        ModelKind::Mlp => "mlp",
    }
}

fn basis_name(b: CountBasis) -> &'static str {
    match b {
        CountBasis::Current => "current",
        CountBasis::Original => "original",
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| Error::Config(format!("{key} = {raw:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
            }
        }

        let mut take = |key: &str| entries.remove(key);
        let mut cfg = ExperimentConfig::default();

        if let Some(v) = take("model") {
            cfg.model = match v.as_str() {
                "linear" => ModelKind::Linear,
                "mlp" => ModelKind::Mlp,
                _ => return Err(Error::Config(format!("model = {v:?}: expected linear or mlp"))),
            };
        }

        let kind = take("dataset.kind").unwrap_or_else(|| "synthetic".into());
        cfg.dataset = match kind.as_str() {
            "synthetic" => {
                let mut s = SyntheticSpec::default();
                if let Some(v) = take("dataset.n_samples") {
                    s.n_samples = parse_value("dataset.n_samples", &v)?;
                }
                if let Some(v) = take("dataset.n_features") {
                    s.n_features = parse_value("dataset.n_features", &v)?;
                }
                if let Some(v) = take("dataset.n_classes") {
                    s.n_classes = parse_value("dataset.n_classes", &v)?;
                }
                if let Some(v) = take("dataset.class_separation") {
                    s.class_separation = parse_value("dataset.class_separation", &v)?;
                }
                if let Some(v) = take("dataset.seed") {
                    s.seed = parse_value("dataset.seed", &v)?;
                }
                DatasetSource::Synthetic(s)
            }
            "idx" => {
                let mut path = |key: &str| {
                    take(key)
                        .map(PathBuf::from)
                        .ok_or_else(|| Error::Config(format!("dataset.kind = idx needs {key}")))
                };
                DatasetSource::Idx {
                    train_images: path("dataset.train_images")?,
                    train_labels: path("dataset.train_labels")?,
                    test_images: path("dataset.test_images")?,
                    test_labels: path("dataset.test_labels")?,
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "dataset.kind = {kind:?}: expected synthetic or idx"
                )))
            }
        };

        if let Some(v) = take("algorithm.kinds") {
            cfg.algorithms = parse_list("algorithm.kinds", &v)?;
        }
        if let Some(v) = take("algorithm.iterations") {
            cfg.iterations = parse_value("algorithm.iterations", &v)?;
        }
        if let Some(v) = take("algorithm.ratio") {
            cfg.ratio = parse_value("algorithm.ratio", &v)?;
        }
        if let Some(v) = take("algorithm.count_basis") {
            cfg.count_basis = match v.as_str() {
                "current" => CountBasis::Current,
                "original" => CountBasis::Original,
                _ => {
                    return Err(Error::Config(format!(
                        "algorithm.count_basis = {v:?}: expected current or original"
                    )))
                }
            };
        }

        let mut p = cfg.sap.norms.p();
        let mut q = cfg.sap.norms.q();
        if let Some(v) = take("sap.p") {
            p = parse_value("sap.p", &v)?;
        }
        if let Some(v) = take("sap.q") {
            q = parse_value("sap.q", &v)?;
        }
        cfg.sap.norms = NormPair::new(p, q)?;
        if let Some(v) = take("sap.eta") {
            cfg.sap.eta = parse_value("sap.eta", &v)?;
        }
        if let Some(v) = take("sap.gamma") {
            cfg.sap.gamma = parse_value("sap.gamma", &v)?;
        }
        if let Some(v) = take("sap.beta") {
            cfg.sap.beta = parse_value("sap.beta", &v)?;
        }

        if let Some(v) = take("scope") {
            cfg.scope = match v.as_str() {
                "global" => Scope::Global,
                "layer_wise" => Scope::LayerWise,
                "neuron_wise" => Scope::NeuronWise,
                _ => {
                    return Err(Error::Config(format!(
                        "scope = {v:?}: expected global, layer_wise or neuron_wise"
                    )))
                }
            };
        }

        if let Some(v) = take("train.epochs") {
            cfg.train.epochs = parse_value("train.epochs", &v)?;
        }
        if let Some(v) = take("train.batch_size") {
            cfg.train.batch_size = parse_value("train.batch_size", &v)?;
        }
        if let Some(v) = take("train.learning_rate") {
            cfg.train.learning_rate = parse_value("train.learning_rate", &v)?;
        }
        if let Some(v) = take("train.momentum") {
            cfg.train.momentum = parse_value("train.momentum", &v)?;
        }
        if let Some(v) = take("train.weight_decay") {
            cfg.train.weight_decay = parse_value("train.weight_decay", &v)?;
        }
        if let Some(v) = take("train.nesterov") {
            cfg.train.nesterov = parse_value("train.nesterov", &v)?;
        }

        if let Some(v) = take("seeds") {
            cfg.seeds = parse_list("seeds", &v)?;
        }
        if let Some(v) = take("output_dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(v) = take("workers") {
            cfg.workers = parse_value("workers", &v)?;
        }

        if let Some(k) = entries.keys().next() {
            return Err(Error::Config(format!("unknown key {k}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
