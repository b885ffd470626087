//! Masks, pruning scopes, magnitude pruning and the iterative algorithms.

mod mask;
mod run;

pub use mask::PruningMask;
pub use run::{replay_counts, run_pruning, AlgorithmKind, AlgorithmSpec, CountBasis, ReplayMismatch};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NetworkParams;
use crate::sparsity::{pq_index, retained_lower_bound, NormPair};

/// Grouping over which magnitudes are ranked and the index is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// All weights form one group.
    Global,
    /// One group per weight matrix.
    LayerWise,
    /// One group per row of each weight matrix (the fan-in of a neuron).
    NeuronWise,
}

impl Scope {
    pub fn name(&self) -> &'static str {
        match self {
            Scope::Global => "global",
            Scope::LayerWise => "layer_wise",
            Scope::NeuronWise => "neuron_wise",
        }
    }
}

/// Location of one weight: layer and row-major offset inside the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WeightRef {
    pub layer: usize,
    pub offset: usize,
}

/// One pruning group: its total size and the magnitudes of its survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    /// Entries covered by the group, kept or not.
    pub size: usize,
    /// Surviving entries in layer-major row-major order.
    pub survivors: Vec<WeightRef>,
    /// `|w|` of each survivor, aligned with `survivors`.
    pub magnitudes: Vec<f64>,
}

impl Group {
    /// `d_i`, the number of surviving entries.
    pub fn surviving(&self) -> usize {
        self.survivors.len()
    }
}

/// Splits the prunable weights into groups for `scope`.
///
/// Every weight belongs to exactly one group; only entries kept by `mask`
/// appear among a group's survivors.
pub fn partition(params: &NetworkParams, mask: &PruningMask, scope: Scope) -> Result<Vec<Group>> {
    mask.check_shapes(&params.weight_shapes())?;
    let mut groups = Vec::new();
    let mut current: Option<Group> = None;
    for (l, layer) in params.layers().iter().enumerate() {
        let cols = layer.spec.in_size;
        for (offset, w) in layer.weights.iter().enumerate() {
            let starts_group = match scope {
                Scope::Global => l == 0 && offset == 0,
                Scope::LayerWise => offset == 0,
                Scope::NeuronWise => offset % cols == 0,
            };
            if starts_group {
                groups.extend(current.take());
                current = Some(Group {
                    size: 0,
                    survivors: Vec::new(),
                    magnitudes: Vec::new(),
                });
            }
            let g = current.as_mut().expect("group opened at first weight");
            g.size += 1;
            if mask.is_kept(l, offset) {
                g.survivors.push(WeightRef { layer: l, offset });
                g.magnitudes.push(w.abs());
            }
        }
    }
    groups.extend(current);
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub mask: PruningMask,
    pub removed: usize,
    /// The requested count when it exceeded the survivors and was clamped.
    pub clamped_from: Option<usize>,
}

/// Drops the `count` smallest surviving magnitudes of `group` from `mask`.
///
/// Ties go to the entry that comes first in the group's order.
pub fn magnitude_prune(group: &Group, mask: &PruningMask, count: usize) -> Result<PruneOutcome> {
    if let Some(r) = group.survivors.iter().find(|r| !mask.is_kept(r.layer, r.offset)) {
        return Err(Error::Shape(format!(
            "group survivor {r:?} is already dropped in the mask"
        )));
    }
    let available = group.surviving();
    let clamped_from = (count > available).then_some(count);
    let count = count.min(available);

    let mut order: Vec<usize> = (0..available).collect();
    let by_magnitude = |a: &usize, b: &usize| -> Ordering {
        group.magnitudes[*a]
            .total_cmp(&group.magnitudes[*b])
            .then(a.cmp(b))
    };
    if count > 0 && count < available {
        order.select_nth_unstable_by(count - 1, by_magnitude);
    }

    let mut next = mask.clone();
    for &i in &order[..count] {
        let r = group.survivors[i];
        next.drop_entry(r.layer, r.offset);
    }
    Ok(PruneOutcome {
        mask: next,
        removed: count,
        clamped_from,
    })
}

/// Hyper-parameters of sparsity-informed adaptive pruning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SapHyperParams {
    pub norms: NormPair,
    /// Assumed tail-to-head mass ratio; zero is the conservative choice.
    pub eta: f64,
    /// Scales the bound-derived pruning fraction.
    pub gamma: f64,
    /// Cap on the fraction pruned in one iteration.
    pub beta: f64,
}

impl Default for SapHyperParams {
    fn default() -> Self {
        Self {
            norms: NormPair::default(),
            eta: 0.0,
            gamma: 1.0,
            beta: 0.9,
        }
    }
}

impl SapHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !self.norms.is_valid_regime() {
            return Err(Error::Domain(format!(
                "SAP needs 0 < p <= 1 <= q, got p={} q={}",
                self.norms.p(),
                self.norms.q()
            )));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Domain(format!("eta {} must be >= 0", self.eta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma {} must be > 0", self.gamma)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta {} outside (0, 1]", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SapCount {
    /// PQ Index of the group's survivors.
    pub index: f64,
    /// Lower bound `r_t` on how many entries to retain.
    pub retained_bound: f64,
    /// Entries to prune, `c_t`.
    pub count: usize,
}

/// `(r_t, c_t)` from a group's survivor count and index.
///
/// `c_t = floor(d min(gamma (1 - r/d), beta))`, evaluated as
/// `floor(min(gamma (d - r), beta d))` so that exact products such as
/// `1000 (1 - 900/1000)` land on the integer instead of just below it.
/// Negative values are rounding noise (`r <= d` for `eta >= 0`) and clamp to 0.
pub fn sap_prune_count(d: usize, index: f64, hp: &SapHyperParams) -> (f64, usize) {
    let d = d as f64;
    let retained = retained_lower_bound(d, index, hp.eta, hp.norms);
    let count = (hp.gamma * (d - retained)).min(hp.beta * d).floor().max(0.0);
    (retained, count as usize)
}

pub fn sap_count(group: &Group, hp: &SapHyperParams) -> Result<SapCount> {
    if group.surviving() == 0 {
        return Err(Error::Domain("group has no surviving entries".into()));
    }
    let index = pq_index(&group.magnitudes, hp.norms)?;
    let (retained_bound, count) = sap_prune_count(group.surviving(), index, hp);
    Ok(SapCount {
        index,
        retained_bound,
        count,
    })
}
