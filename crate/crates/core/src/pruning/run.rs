//! One Shot, Lottery Ticket and SAP pruning loops.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{magnitude_prune, partition, sap_count, sap_prune_count, PruningMask, SapHyperParams, Scope};
use crate::data::{GroupLog, IterationMetrics, RunConfig, RunEvent, RunRecord, RunStatus, SplitDataset};
use crate::error::{Error, Result};
use crate::nn::{evaluate, init_network, train, Evaluation, LayerSpec, NetworkParams, TrainConfig};
use crate::sparsity::{gini_index, pq_index, NormPair};

/// What a fixed-ratio baseline multiplies `P` by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountBasis {
    /// Current survivors of the group, giving `(1 - P)^t` decay.
    #[default]
    Current,
    /// Original size of the group, giving linear decay.
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmKind {
    /// Prunes from the weights of a single training run.
    OneShot { ratio: f64, basis: CountBasis },
    /// Prunes, rewinds to the initial weights and retrains every iteration.
    LotteryTicket { ratio: f64, basis: CountBasis },
    /// Lottery Ticket with the per-iteration count taken from the PQI bound.
    Sap(SapHyperParams),
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::OneShot { .. } => "one_shot",
            AlgorithmKind::LotteryTicket { .. } => "lottery_ticket",
            AlgorithmKind::Sap(_) => "sap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    /// `T`; iterations `0..=T` are executed.
    pub iterations: usize,
}

impl AlgorithmSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AlgorithmKind::OneShot { ratio, .. } | AlgorithmKind::LotteryTicket { ratio, .. } => {
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(Error::Domain(format!("pruning ratio {ratio} outside (0, 1)")));
                }
            }
            AlgorithmKind::Sap(hp) => hp.validate()?,
        }
        if self.iterations == 0 {
            return Err(Error::Domain("need at least one pruning iteration".into()));
        }
        Ok(())
    }
}

/// PQI columns of a run record always use `(p, q) = (0.5, 1)`, whatever
/// norms SAP prunes with.
fn index_of(values: &[f64]) -> Option<f64> {
    pq_index(values, NormPair::default()).ok()
}

/// Applies one pruning step and returns the next mask with per-group logs.
fn prune_step(
    alg: &AlgorithmKind,
    scope: Scope,
    weights: &NetworkParams,
    mask: &PruningMask,
    t: usize,
    events: &mut Vec<RunEvent>,
) -> Result<(PruningMask, Vec<GroupLog>)> {
    let groups = partition(weights, mask, scope)?;
    let mut next = mask.clone();
    let mut logs = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        let d = group.surviving();
        if d == 0 {
            logs.push(GroupLog {
                d,
                index: None,
                count: 0,
            });
            continue;
        }
        let (index, count) = match alg {
            AlgorithmKind::OneShot { ratio, basis } | AlgorithmKind::LotteryTicket { ratio, basis } => {
                let base = match basis {
                    CountBasis::Current => d,
                    CountBasis::Original => group.size,
                };
                (None, (base as f64 * ratio).floor() as usize)
            }
            AlgorithmKind::Sap(hp) => match sap_count(group, hp) {
                Ok(c) => (Some(c.index), c.count),
                Err(Error::UndefinedIndex) => {
                    let message = format!("group {g}: all {d} survivors are zero, skipped");
                    warn!("t={t}: {message}");
                    events.push(RunEvent { t, message });
                    (None, 0)
                }
                Err(e) => return Err(e),
            },
        };
        let outcome = magnitude_prune(group, &next, count)?;
        if let Some(requested) = outcome.clamped_from {
            let message = format!("group {g}: requested {requested} of {d} survivors, clamped");
            warn!("t={t}: {message}");
            events.push(RunEvent { t, message });
        }
        next = outcome.mask;
        logs.push(GroupLog {
            d,
            index,
            count: outcome.removed,
        });
    }
    Ok((next, logs))
}

struct Snapshot {
    eval: Evaluation,
    pqi: Option<f64>,
    gini: Option<f64>,
}

fn snapshot(weights: &NetworkParams, mask: &PruningMask, data: &crate::nn::Dataset) -> Result<Snapshot> {
    let survivors = weights.surviving_magnitudes(mask);
    Ok(Snapshot {
        eval: evaluate(weights, mask, data)?,
        pqi: index_of(&survivors),
        gini: gini_index(&survivors).ok(),
    })
}

/// Runs `alg` for iterations `0..=T` and records retrained and pruned metrics.
///
/// Lottery Ticket and SAP retrain `w_init ⊙ m_t` every iteration. One Shot
/// trains once and prunes the same trained weights throughout. Metrics are
/// measured on `data.test`. A diverging training run ends the record with
/// [`RunStatus::Failed`] rather than an error.
pub fn run_pruning(
    alg: &AlgorithmSpec,
    scope: Scope,
    layers: &[LayerSpec],
    train_cfg: &TrainConfig,
    seed: u64,
    data: &SplitDataset,
) -> Result<RunRecord> {
    alg.validate()?;
    let cfg = TrainConfig { seed, ..*train_cfg };
    cfg.validate()?;
    let init = init_network(layers, seed)?;
    let mut mask = init.full_mask();
    let d_0 = mask.ones();
    let mut record = RunRecord {
        config: RunConfig {
            algorithm: *alg,
            scope,
            layers: layers.to_vec(),
            train: cfg,
            seed,
        },
        status: RunStatus::Completed,
        d_0,
        d_final: d_0,
        iterations: Vec::with_capacity(alg.iterations + 1),
        events: Vec::new(),
    };

    let mut one_shot_weights: Option<NetworkParams> = None;
    for t in 0..=alg.iterations {
        let d_t = mask.ones();
        let trained = match (&alg.kind, &one_shot_weights) {
            (AlgorithmKind::OneShot { .. }, Some(w0)) => w0.clone(),
            _ => {
                let rewound = init.rewind(&mask)?;
                match train(&rewound, &mask, &data.train, &cfg) {
                    Ok(w) => w,
                    Err(e @ Error::Divergence { .. }) => {
                        warn!("t={t}: {e}");
                        record.status = RunStatus::Failed {
                            iteration: t,
                            reason: e.to_string(),
                        };
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        if matches!(alg.kind, AlgorithmKind::OneShot { .. }) && one_shot_weights.is_none() {
            one_shot_weights = Some(trained.clone());
        }

        let retrained = snapshot(&trained, &mask, &data.test)?;
        let (next, groups) = prune_step(&alg.kind, scope, &trained, &mask, t, &mut record.events)?;
        let pruned = snapshot(&trained, &next, &data.test)?;

        record.iterations.push(IterationMetrics {
            t,
            d_t,
            percent_remaining: d_t as f64 / d_0 as f64,
            acc_retrained: retrained.eval.accuracy,
            loss_retrained: retrained.eval.loss,
            acc_pruned: pruned.eval.accuracy,
            loss_pruned: pruned.eval.loss,
            pqi_retrained: retrained.pqi,
            pqi_pruned: pruned.pqi,
            gini_retrained: retrained.gini,
            delta_acc: retrained.eval.accuracy - pruned.eval.accuracy,
            delta_pqi: retrained.pqi.zip(pruned.pqi).map(|(a, b)| a - b),
            gini_pruned: pruned.gini,
            pruned_total: d_t - next.ones(),
            groups,
        });
        mask = next;
        record.d_final = mask.ones();
    }
    Ok(record)
}

/// A logged SAP count that the closed form does not reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub t: usize,
    pub group: usize,
    pub logged: usize,
    pub replayed: usize,
}

/// Recomputes every logged SAP count from its logged `(d, I)`.
///
/// Non-SAP records have nothing to replay and return no mismatches. A group
/// whose count was clamped to its survivors replays as the clamped value.
pub fn replay_counts(record: &RunRecord) -> Vec<ReplayMismatch> {
    let AlgorithmKind::Sap(hp) = record.config.algorithm.kind else {
        return Vec::new();
    };
    let mut mismatches = Vec::new();
    for it in &record.iterations {
        for (g, log) in it.groups.iter().enumerate() {
            let replayed = match log.index {
                Some(index) => sap_prune_count(log.d, index, &hp).1.min(log.d),
                None => 0,
            };
            if replayed != log.count {
                mismatches.push(ReplayMismatch {
                    t: it.t,
                    group: g,
                    logged: log.count,
                    replayed,
                });
            }
        }
    }
    mismatches
}
