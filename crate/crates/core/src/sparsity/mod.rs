//! Norms, sparsity indices and the PQI retention bound.
//!
//! Every ratio of norms is evaluated on the vector divided by its largest
//! entry. The division is exact by homogeneity and keeps `|w_i|^p` from
//! overflowing or underflowing for small `p` or extreme magnitudes.

mod audit;

pub use audit::{
    audit_measure, directed_robin_hood_search, AuditConfig, NegativeSearch, Property,
    PropertyReport, PropertyResult, STRICT_MARGIN,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-negative magnitudes of a parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeVector(Vec<f64>);

impl MagnitudeVector {
    /// Validates that `values` is non-empty with finite, non-negative entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("magnitude vector is empty".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::Domain(format!(
                "entry {i} = {v} is not a finite non-negative magnitude"
            )));
        }
        Ok(Self(values))
    }

    /// Takes absolute values of signed weights.
    pub fn from_signed(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|v| v.abs()).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

/// The norm orders `(p, q)` of the PQ Index.
///
/// [`NormPair::new`] enforces `0 < p <= 1 <= q` with `p < q`, the regime in
/// which the index satisfies all six sparsity axioms (it includes the common
/// choice `p = 0.5, q = 1`). [`NormPair::relaxed`] only requires
/// `0 < p < q` and exists to exhibit axiom failures outside that regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormPair")]
pub struct NormPair {
    p: f64,
    q: f64,
}

#[derive(Deserialize)]
struct RawNormPair {
    p: f64,
    q: f64,
}

impl TryFrom<RawNormPair> for NormPair {
    type Error = Error;

    fn try_from(raw: RawNormPair) -> Result<Self> {
        NormPair::relaxed(raw.p, raw.q)
    }
}

impl NormPair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0 && q >= 1.0 && p < q && q.is_finite()) {
            return Err(Error::Domain(format!(
                "norm pair (p={p}, q={q}) outside 0 < p <= 1 <= q, p < q"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn relaxed(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0 && q > p && q.is_finite()) {
            return Err(Error::Domain(format!(
                "norm pair (p={p}, q={q}) outside 0 < p < q"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_valid_regime(&self) -> bool {
        self.p <= 1.0 && self.q >= 1.0
    }

    /// Largest attainable index for a vector of length `d`: `1 - d^(1/q - 1/p)`.
    pub fn max_index(&self, d: usize) -> f64 {
        1.0 - (d as f64).powf(1.0 / self.q - 1.0 / self.p)
    }
}

impl Default for NormPair {
    fn default() -> Self {
        Self { p: 0.5, q: 1.0 }
    }
}

fn check_finite(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Domain("vector is empty".into()));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("vector has a non-finite entry".into()));
    }
    Ok(())
}

fn abs_max(w: &[f64]) -> f64 {
    w.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `Σ (|w_i| / scale)^p`
fn scaled_power_sum(w: &[f64], scale: f64, p: f64) -> f64 {
    w.iter().map(|v| (v.abs() / scale).powf(p)).sum()
}

/// The ℓp norm `(Σ|w_i|^p)^(1/p)` for any `p > 0`.
pub fn lp_norm(w: &[f64], p: f64) -> Result<f64> {
    check_finite(w)?;
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("norm order p = {p} must be positive")));
    }
    let scale = abs_max(w);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(scale * scaled_power_sum(w, scale, p).powf(1.0 / p))
}

/// PQ Index `1 - d^(1/q - 1/p) ‖w‖_p / ‖w‖_q`. Larger means sparser.
pub fn pq_index(w: &[f64], norms: NormPair) -> Result<f64> {
    check_finite(w)?;
    let scale = abs_max(w);
    if scale == 0.0 {
        return Err(Error::UndefinedIndex);
    }
    let (p, q) = (norms.p, norms.q);
    let ratio =
        scaled_power_sum(w, scale, p).powf(1.0 / p) / scaled_power_sum(w, scale, q).powf(1.0 / q);
    Ok(1.0 - (w.len() as f64).powf(1.0 / q - 1.0 / p) * ratio)
}

/// Gini Index on ascending-sorted magnitudes:
/// `1 - 2 Σ_k (w_(k) / ‖w‖_1) ((d - k + 1/2) / d)`.
pub fn gini_index(w: &[f64]) -> Result<f64> {
    check_finite(w)?;
    let scale = abs_max(w);
    if scale == 0.0 {
        return Err(Error::UndefinedIndex);
    }
    let mut sorted: Vec<f64> = w.iter().map(|v| v.abs() / scale).collect();
    sorted.sort_by(f64::total_cmp);
    let l1: f64 = sorted.iter().sum();
    let d = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| v * (d - (i + 1) as f64 + 0.5))
        .sum();
    Ok(1.0 - 2.0 * weighted / (l1 * d))
}

/// Indices of the `r` largest magnitudes; equal magnitudes go to the lower index.
pub fn top_r_indices(w: &[f64], r: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
    order.truncate(r);
    order
}

/// Ratio of the p-mass outside the top-`r` magnitudes to the p-mass inside.
pub fn eta_r(w: &[f64], p: f64, r: usize) -> Result<f64> {
    check_finite(w)?;
    if p.is_nan() || p <= 0.0 {
        return Err(Error::Domain(format!("norm order p = {p} must be positive")));
    }
    if r == 0 || r > w.len() {
        return Err(Error::Domain(format!(
            "r = {r} outside [1, {}]",
            w.len()
        )));
    }
    let scale = abs_max(w);
    if scale == 0.0 {
        return Err(Error::UndefinedIndex);
    }
    if r == w.len() {
        return Ok(0.0);
    }
    let mut in_head = vec![false; w.len()];
    for i in top_r_indices(w, r) {
        in_head[i] = true;
    }
    let (mut head, mut tail) = (0.0, 0.0);
    for (v, head_member) in w.iter().zip(&in_head) {
        let m = (v.abs() / scale).powf(p);
        if *head_member {
            head += m;
        } else {
            tail += m;
        }
    }
    Ok(tail / head)
}

/// Inputs to the PQI retention bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    d: usize,
    index_value: f64,
    eta: f64,
    norms: NormPair,
}

/// Slack allowed on the index range when validating bound inputs.
pub const INDEX_TOLERANCE: f64 = 1e-9;

impl BoundInputs {
    pub fn new(d: usize, index_value: f64, eta: f64, norms: NormPair) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("d must be positive".into()));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::Domain(format!("eta = {eta} must be >= 0")));
        }
        let upper = norms.max_index(d) + INDEX_TOLERANCE;
        if !(index_value >= -INDEX_TOLERANCE && index_value <= upper) {
            return Err(Error::Domain(format!(
                "index {index_value} outside [0, {upper}] for d = {d}"
            )));
        }
        Ok(Self {
            d,
            index_value,
            eta,
            norms,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn index_value(&self) -> f64 {
        self.index_value
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn norms(&self) -> NormPair {
        self.norms
    }
}

/// `d (1+η)^(-q/(q-p)) (1-I)^(qp/(q-p))`, the bound on retained entries.
///
/// Shared by [`pqi_lower_bound`] and the adaptive pruning count so both use
/// one floating-point evaluation order.
pub fn retained_lower_bound(d: f64, index_value: f64, eta: f64, norms: NormPair) -> f64 {
    let (p, q) = (norms.p, norms.q);
    let gap = q - p;
    // Rounding can push the index a hair below zero; the base must stay <= 1.
    let complement = (1.0 - index_value).min(1.0);
    d * (1.0 + eta).powf(-q / gap) * complement.powf(q * p / gap)
}

pub fn pqi_lower_bound(inputs: &BoundInputs) -> Result<f64> {
    if inputs.norms.p == inputs.norms.q {
        return Err(Error::Domain("p = q makes the bound exponent singular".into()));
    }
    Ok(retained_lower_bound(
        inputs.d as f64,
        inputs.index_value,
        inputs.eta,
        inputs.norms,
    ))
}

/// A sparsity measure under audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    PqIndex { norms: NormPair },
    Gini,
}

impl MeasureSpec {
    pub fn pq(p: f64, q: f64) -> Result<Self> {
        Ok(MeasureSpec::PqIndex {
            norms: NormPair::new(p, q)?,
        })
    }

    pub fn evaluate(&self, w: &[f64]) -> Result<f64> {
        match self {
            MeasureSpec::PqIndex { norms } => pq_index(w, *norms),
            MeasureSpec::Gini => gini_index(w),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MeasureSpec::PqIndex { norms } => format!("pqi(p={}, q={})", norms.p, norms.q),
            MeasureSpec::Gini => "gini".to_string(),
        }
    }
}
