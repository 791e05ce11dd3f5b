//! Rollout-to-training schedulers: balance variable-length samples across
//! data-parallel ranks, pack samples into fixed-capacity micro-steps, and
//! check the gradient-weighting identity that makes packed micro-steps
//! equivalent to whole-batch processing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum SchedError {
    #[error("item {id} (length {length}) exceeds capacity {capacity}")]
    ItemExceedsCapacity {
        id: String,
        length: usize,
        capacity: usize,
    },
    #[error("sample {0} has no tokens")]
    EmptySample(usize),
}

/// Compute-cost surrogate derived from an item's token length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// cost = length
    #[default]
    Length,
    /// cost = length^2, an attention-dominated surrogate
    Quadratic,
}

impl CostMode {
    pub fn cost_of(self, length: usize) -> f64 {
        match self {
            CostMode::Length => length as f64,
            CostMode::Quadratic => (length as f64) * (length as f64),
        }
    }
}

/// One rollout sample to schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkItem {
    pub id: String,
    /// Sequence length in tokens.
    pub length: usize,
    /// Compute surrogate; defaults to the length.
    #[serde(default = "default_cost")]
    pub cost: f64,
}

fn default_cost() -> f64 {
    f64::NAN
}

impl WorkItem {
    pub fn new(id: &str, length: usize) -> Self {
        Self {
            id: id.to_string(),
            length,
            cost: length as f64,
        }
    }

    pub fn with_cost_mode(id: &str, length: usize, mode: CostMode) -> Self {
        Self {
            id: id.to_string(),
            length,
            cost: mode.cost_of(length),
        }
    }

    /// Fill in the cost for items deserialized without one.
    pub fn resolve_cost(&mut self, mode: CostMode) {
        if self.cost.is_nan() {
            self.cost = mode.cost_of(self.length);
        }
    }
}

/// Assignment of every item to a rank, with per-rank total cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankAssignment {
    pub rank_of: BTreeMap<String, usize>,
    pub loads: Vec<f64>,
}

impl RankAssignment {
    pub fn max_load(&self) -> f64 {
        self.loads.iter().copied().fold(0.0, f64::max)
    }
}

/// Longest-processing-time greedy: items by descending cost, each to the
/// currently least-loaded rank. Ties are deterministic (by item id on equal
/// cost, by lowest rank index on equal load).
pub fn balance_ranks(items: &[WorkItem], ranks: usize) -> RankAssignment {
    assert!(ranks >= 1, "at least one rank");
    let mut order: Vec<&WorkItem> = items.iter().collect();
    order.sort_by(|a, b| {
        b.cost
            .partial_cmp(&a.cost)
            .expect("finite costs")
            .then_with(|| a.id.cmp(&b.id))
    });
    let mut loads = vec![0.0f64; ranks];
    let mut rank_of = BTreeMap::new();
    for item in order {
        let rank = loads
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        loads[rank] += item.cost;
        rank_of.insert(item.id.clone(), rank);
    }
    RankAssignment { rank_of, loads }
}

/// Packed micro-steps; each bin's total length fits the context capacity and
/// the unused tail is padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroStepPlan {
    pub bins: Vec<Vec<String>>,
    pub capacity: usize,
}

impl MicroStepPlan {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }
}

/// First-fit-decreasing by length: items in descending length order, each
/// into the first bin with room.
pub fn pack_microsteps(items: &[WorkItem], capacity: usize) -> Result<MicroStepPlan, SchedError> {
    if let Some(too_big) = items.iter().find(|i| i.length > capacity) {
        return Err(SchedError::ItemExceedsCapacity {
            id: too_big.id.clone(),
            length: too_big.length,
            capacity,
        });
    }
    let mut order: Vec<&WorkItem> = items.iter().collect();
    order.sort_by(|a, b| b.length.cmp(&a.length).then_with(|| a.id.cmp(&b.id)));
    let mut bins: Vec<Vec<String>> = Vec::new();
    let mut room: Vec<usize> = Vec::new();
    for item in order {
        match room.iter().position(|r| *r >= item.length) {
            Some(bin) => {
                room[bin] -= item.length;
                bins[bin].push(item.id.clone());
            }
            None => {
                room.push(capacity - item.length);
                bins.push(vec![item.id.clone()]);
            }
        }
    }
    Ok(MicroStepPlan { bins, capacity })
}

/// Micro-step values weighted and averaged by sample count:
/// sum(value_k * count_k) / sum(count_k).
pub fn weighted_gradient<R: Real>(micro_values: &[(R, usize)]) -> R {
    let total: usize = micro_values.iter().map(|(_, c)| *c).sum();
    if total == 0 {
        return R::zero();
    }
    let weighted: R = micro_values
        .iter()
        .map(|(v, c)| *v * R::of_usize(*c))
        .sum();
    weighted / R::of_usize(total)
}

/// Loss aggregation granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Mean of per-sample token means.
    PerSample,
    /// Mean over all tokens pooled.
    PerToken,
}

/// Aggregate per-token losses across samples.
pub fn aggregate_loss<R: Real>(
    token_losses: &[Vec<R>],
    mode: AggregationMode,
) -> Result<R, SchedError> {
    if let Some(empty) = token_losses.iter().position(Vec::is_empty) {
        return Err(SchedError::EmptySample(empty));
    }
    if token_losses.is_empty() {
        return Ok(R::zero());
    }
    match mode {
        AggregationMode::PerSample => {
            let sum: R = token_losses
                .iter()
                .map(|tokens| tokens.iter().copied().sum::<R>() / R::of_usize(tokens.len()))
                .sum();
            Ok(sum / R::of_usize(token_losses.len()))
        }
        AggregationMode::PerToken => {
            let count: usize = token_losses.iter().map(Vec::len).sum();
            let sum: R = token_losses.iter().flatten().copied().sum();
            Ok(sum / R::of_usize(count))
        }
    }
}
