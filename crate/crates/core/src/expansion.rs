//! Dynamic sampling expansion via ratio EMA.
//!
//! Rollout batches are oversampled by `expansion_ratio = 1 / (1 -
//! not_valid_sample_rate)`, smoothed by an exponential moving average and
//! capped, so the post-filter batch stays near its target size. Groups that
//! come back all-correct or all-incorrect carry no gradient signal and are
//! dropped; the most informative of the valid groups (correct counts closest
//! to half the group) are kept.

use crate::num::Real;
use crate::sim::RolloutGroup;

/// Ratio-EMA controller state governing oversampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionState<R: Real> {
    /// Smoothed expansion ratio in [1, cap].
    pub ema: R,
    /// EMA coefficient on the old value, in [0, 1).
    pub beta: R,
    /// Upper bound on the ratio; bounds rollout cost at the rate-1
    /// singularity.
    pub cap: R,
    pub last_not_valid_rate: R,
}

impl<R: Real> ExpansionState<R> {
    pub fn new(beta: R, cap: R) -> Self {
        debug_assert!(R::zero() <= beta && beta < R::one());
        debug_assert!(cap >= R::one());
        Self {
            ema: R::one(),
            beta,
            cap,
            last_not_valid_rate: R::zero(),
        }
    }

    /// The stated defaults: beta 0.9, cap 4, ema starting at 1.
    pub fn standard() -> Self {
        Self::new(R::lit(0.9), R::lit(4.0))
    }

    /// expansion_ratio = 1 / (1 - not_valid_rate), clamped to [1, cap].
    /// A rate of 1 (or beyond float fuzz) clamps to the cap.
    pub fn compute_ratio(&self, not_valid_rate: R) -> R {
        let rate = not_valid_rate.max(R::zero());
        if rate >= R::one() {
            return self.cap;
        }
        (R::one() / (R::one() - rate)).clamp(R::one(), self.cap)
    }

    /// ema <- beta * ema + (1 - beta) * observed, clamped to [1, cap].
    pub fn update_ema(&mut self, observed_ratio: R) {
        debug_assert!(observed_ratio >= R::one());
        self.ema = (self.beta * self.ema + (R::one() - self.beta) * observed_ratio)
            .clamp(R::one(), self.cap);
    }

    /// Fold one iteration's observed invalid rate into the controller.
    pub fn observe_not_valid_rate(&mut self, not_valid_rate: R) {
        let ratio = self.compute_ratio(not_valid_rate);
        self.update_ema(ratio);
        self.last_not_valid_rate = not_valid_rate;
    }

    /// Prompts to roll out this iteration: ceil(B * ema).
    pub fn plan_rollout_count(&self, target_batch: usize) -> usize {
        let planned = (R::of_usize(target_batch) * self.ema).ceil();
        planned.to_usize().unwrap_or(target_batch).max(target_batch)
    }
}

/// Outcome of selecting informative groups out of an oversampled rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Indices of the kept groups, most informative first.
    pub selected: Vec<usize>,
    /// Fraction of groups that were all-correct or all-incorrect.
    pub not_valid_rate: f64,
    /// How many groups short of the target batch the valid set fell.
    pub shortfall: Option<usize>,
}

/// Keep up to `batch` valid groups, ordered by ascending distance of the
/// correct count from G/2, ties broken by sample id. Never returns an
/// all-correct or all-incorrect group.
pub fn select_informative(groups: &[RolloutGroup], batch: usize, group_size: usize) -> Selection {
    if groups.is_empty() {
        return Selection {
            selected: Vec::new(),
            not_valid_rate: 0.0,
            shortfall: Some(batch),
        };
    }
    let mut valid: Vec<usize> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.valid)
        .map(|(i, _)| i)
        .collect();
    let not_valid_rate = 1.0 - valid.len() as f64 / groups.len() as f64;
    // |2c - G| is |c - G/2| scaled by 2, kept integral.
    let balance = |i: &usize| {
        let c = groups[*i].correct_count;
        (2 * c).abs_diff(group_size)
    };
    valid.sort_by(|a, b| balance(a).cmp(&balance(b)).then_with(|| {
        groups[*a].sample_id.cmp(&groups[*b].sample_id)
    }));
    let shortfall = batch.checked_sub(valid.len()).filter(|d| *d > 0);
    valid.truncate(batch);
    Selection {
        selected: valid,
        not_valid_rate,
        shortfall,
    }
}
