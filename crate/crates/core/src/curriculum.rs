//! Difficulty bookkeeping and per-iteration sampling-weight adaptation.
//!
//! Samples carry a blended pass rate that merges offline difficulty labels
//! with online group outcomes via an EMA. Rates are bucketed into tiers by
//! ascending edges, so tier 0 is the hardest (lowest pass rate) and tier
//! T-1 the easiest. Sampling weights form a tent over the tiers, re-shaped
//! every iteration from the observed tier populations.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CurriculumError {
    #[error("tier {tier} out of range for {count} tiers")]
    TierOutOfRange { tier: usize, count: usize },
    #[error("pass rate {0} outside [0, 1]")]
    InvalidPassRate(f64),
    #[error("all tiers are empty")]
    AllTiersEmpty,
    #[error("invalid tier configuration: {0}")]
    InvalidConfig(String),
}

/// One prompt with reference answer, domain tag, and difficulty state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSample {
    pub id: String,
    pub domain: String,
    pub prompt: String,
    pub reference: String,
    pub offline_tier: usize,
    /// EMA of observed within-group pass fractions, seeded from the offline
    /// tier's bucket midpoint.
    pub blended_pass_rate: f64,
    pub exposures: u64,
}

/// How the online pass@k outcome is folded into the blended rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnlineGrading {
    /// Within-group correct fraction.
    #[default]
    Fraction,
    /// Strict pass@k indicator: any correct response counts as 1.
    PassAtK,
}

/// Tier edges, current sampling weights, and the grading blend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub tier_count: usize,
    /// Strictly ascending pass-rate edges in (0, 1); length tier_count - 1.
    pub tier_edges: Vec<f64>,
    /// Probability vector over tiers, supported on nonempty tiers.
    pub tier_weights: Vec<f64>,
    /// EMA coefficient on the old blended rate.
    pub blend_factor: f64,
    /// Tent profile reweighting starts from.
    pub base_weights: Vec<f64>,
    pub online_grading: OnlineGrading,
}

impl CurriculumState {
    pub fn new(
        tier_count: usize,
        tier_edges: Vec<f64>,
        blend_factor: f64,
    ) -> Result<Self, CurriculumError> {
        if tier_count < 3 {
            return Err(CurriculumError::InvalidConfig(
                "tier_count must be at least 3".into(),
            ));
        }
        if tier_edges.len() != tier_count - 1 {
            return Err(CurriculumError::InvalidConfig(format!(
                "expected {} edges, got {}",
                tier_count - 1,
                tier_edges.len()
            )));
        }
        let ascending_in_unit = tier_edges
            .windows(2)
            .all(|w| w[0] < w[1])
            && tier_edges.iter().all(|e| 0.0 < *e && *e < 1.0);
        if !ascending_in_unit {
            return Err(CurriculumError::InvalidConfig(
                "edges must be strictly ascending within (0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&blend_factor) {
            return Err(CurriculumError::InvalidConfig(
                "blend_factor must lie in [0, 1]".into(),
            ));
        }
        let base = tent_weights(tier_count);
        Ok(Self {
            tier_count,
            tier_edges,
            tier_weights: base.clone(),
            blend_factor,
            base_weights: base,
            online_grading: OnlineGrading::default(),
        })
    }

    /// The stated defaults: 5 tiers, edges [0.1, 0.3, 0.7, 0.9], blend 0.8.
    pub fn standard() -> Self {
        Self::new(5, vec![0.1, 0.3, 0.7, 0.9], 0.8).unwrap()
    }

    pub fn with_base_weights(mut self, base: Vec<f64>) -> Result<Self, CurriculumError> {
        if base.len() != self.tier_count || base.iter().any(|w| *w < 0.0) {
            return Err(CurriculumError::InvalidConfig(
                "base weights must be nonnegative, one per tier".into(),
            ));
        }
        let sum: f64 = base.iter().sum();
        if sum <= 0.0 {
            return Err(CurriculumError::InvalidConfig(
                "base weights must not all be zero".into(),
            ));
        }
        self.base_weights = base.iter().map(|w| w / sum).collect();
        self.tier_weights = self.base_weights.clone();
        Ok(self)
    }

    /// Tier of a pass rate: the number of edges at or below it.
    pub fn bucket(&self, pass_rate: f64) -> usize {
        bucket_tier(pass_rate, &self.tier_edges)
    }

    /// Midpoint pass rate of a tier's bucket, used to seed blended rates
    /// from offline labels.
    pub fn tier_midpoint(&self, tier: usize) -> Result<f64, CurriculumError> {
        if tier >= self.tier_count {
            return Err(CurriculumError::TierOutOfRange {
                tier,
                count: self.tier_count,
            });
        }
        let lo = if tier == 0 { 0.0 } else { self.tier_edges[tier - 1] };
        let hi = if tier == self.tier_count - 1 {
            1.0
        } else {
            self.tier_edges[tier]
        };
        Ok((lo + hi) / 2.0)
    }

    /// Fold one rollout-group outcome into a sample's blended rate and
    /// exposure count.
    pub fn grade_online(&self, sample: &mut TaskSample, group_correct: usize, group_size: usize) {
        debug_assert!(group_correct <= group_size && group_size > 0);
        let observed = match self.online_grading {
            OnlineGrading::Fraction => group_correct as f64 / group_size as f64,
            OnlineGrading::PassAtK => {
                if group_correct > 0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        sample.blended_pass_rate =
            self.blend_factor * sample.blended_pass_rate + (1.0 - self.blend_factor) * observed;
        sample.exposures += 1;
    }

    /// Population of each tier under the current blended rates.
    pub fn tier_populations(&self, pool: &[TaskSample]) -> Vec<usize> {
        let mut pops = vec![0usize; self.tier_count];
        for s in pool {
            pops[self.bucket(s.blended_pass_rate)] += 1;
        }
        pops
    }

    /// Re-shape sampling weights from tier populations: start from the tent,
    /// zero empty tiers, damp the easiest nonempty tier in proportion to its
    /// population share, renormalize.
    pub fn reweight(&mut self, populations: &[usize]) -> Result<(), CurriculumError> {
        if populations.len() != self.tier_count {
            return Err(CurriculumError::InvalidConfig(format!(
                "expected {} populations, got {}",
                self.tier_count,
                populations.len()
            )));
        }
        let total: usize = populations.iter().sum();
        if total == 0 {
            return Err(CurriculumError::AllTiersEmpty);
        }
        let mut weights: Vec<f64> = self
            .base_weights
            .iter()
            .zip(populations)
            .map(|(w, pop)| if *pop > 0 { *w } else { 0.0 })
            .collect();
        let zeroed = weights.clone();
        let easiest = populations.iter().rposition(|p| *p > 0).expect("total > 0");
        let share = populations[easiest] as f64 / total as f64;
        weights[easiest] *= 1.0 - share;
        let sum: f64 = weights.iter().sum();
        if sum > 0.0 {
            for w in &mut weights {
                *w /= sum;
            }
        } else {
            // Damping removed the only supported tier; fall back to the
            // undamped zeroed tent.
            let zsum: f64 = zeroed.iter().sum();
            weights = zeroed.into_iter().map(|w| w / zsum).collect();
        }
        self.tier_weights = weights;
        Ok(())
    }
}

/// Tier index of a pass rate under ascending edges.
pub fn bucket_tier(pass_rate: f64, edges: &[f64]) -> usize {
    edges.iter().filter(|e| **e <= pass_rate).count()
}

/// Tent profile peaked at the middle tier, doubling toward the peak;
/// for T = 5 this is [0.1, 0.2, 0.4, 0.2, 0.1].
pub fn tent_weights(tier_count: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..tier_count)
        .map(|i| (2.0f64).powi(i.min(tier_count - 1 - i) as i32))
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Bucket offline pass rates into tiers and blend with human annotations
/// (rounded half-up average) where present. Keys follow the pass-rate map.
pub fn grade_offline(
    pass_rates: &std::collections::BTreeMap<String, f64>,
    human_tiers: &std::collections::BTreeMap<String, usize>,
    state: &CurriculumState,
) -> Result<std::collections::BTreeMap<String, usize>, CurriculumError> {
    let mut tiers = std::collections::BTreeMap::new();
    for (id, rate) in pass_rates {
        if !(0.0..=1.0).contains(rate) {
            return Err(CurriculumError::InvalidPassRate(*rate));
        }
        let mut tier = state.bucket(*rate);
        if let Some(human) = human_tiers.get(id) {
            if *human >= state.tier_count {
                return Err(CurriculumError::TierOutOfRange {
                    tier: *human,
                    count: state.tier_count,
                });
            }
            tier = blend_tiers(tier, *human);
        }
        tiers.insert(id.clone(), tier);
    }
    Ok(tiers)
}

/// Rounded half-up average of two tier indices.
pub fn blend_tiers(a: usize, b: usize) -> usize {
    (a + b).div_ceil(2)
}

/// A drawn batch: indices into the pool, plus a shortfall flag when the pool
/// could not supply the requested size.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDraw {
    pub indices: Vec<usize>,
    pub shortfall: bool,
}

impl BatchDraw {
    pub fn samples<'a>(&self, pool: &'a [TaskSample]) -> Vec<&'a TaskSample> {
        self.indices.iter().map(|i| &pool[*i]).collect()
    }
}

/// Draw up to `n` samples: tiers by the current weights, then uniformly
/// without replacement within a tier. Tiers exhausted mid-batch drop out of
/// the weighting; when every weighted tier is exhausted the draw falls back
/// to uniform over the remaining samples. Deterministic under the seed.
pub fn draw_batch(
    state: &CurriculumState,
    pool: &[TaskSample],
    n: usize,
    rng_seed: u64,
) -> BatchDraw {
    let all: Vec<usize> = (0..pool.len()).collect();
    draw_batch_subset(state, pool, &all, n, rng_seed)
}

/// [`draw_batch`] restricted to a subset of pool indices (for per-domain
/// mixing).
pub fn draw_batch_subset(
    state: &CurriculumState,
    pool: &[TaskSample],
    subset: &[usize],
    n: usize,
    rng_seed: u64,
) -> BatchDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut remaining: Vec<Vec<usize>> = vec![Vec::new(); state.tier_count];
    for idx in subset {
        remaining[state.bucket(pool[*idx].blended_pass_rate)].push(*idx);
    }

    let want = n.min(subset.len());
    let mut indices = Vec::with_capacity(want);
    while indices.len() < want {
        let weighted_total: f64 = remaining
            .iter()
            .zip(&state.tier_weights)
            .filter(|(r, _)| !r.is_empty())
            .map(|(_, w)| *w)
            .sum();
        let tier = if weighted_total > 0.0 {
            let mut point = rng.random::<f64>() * weighted_total;
            let mut chosen = None;
            for (t, (r, w)) in remaining.iter().zip(&state.tier_weights).enumerate() {
                if r.is_empty() {
                    continue;
                }
                point -= *w;
                if point <= 0.0 {
                    chosen = Some(t);
                    break;
                }
            }
            chosen.unwrap_or_else(|| {
                remaining
                    .iter()
                    .zip(&state.tier_weights)
                    .rposition(|(r, w)| !r.is_empty() && *w > 0.0)
                    .expect("weighted_total > 0")
            })
        } else {
            // All weighted tiers exhausted: uniform over remaining samples.
            let left: usize = remaining.iter().map(Vec::len).sum();
            let mut point = rng.random_range(0..left);
            remaining
                .iter()
                .position(|r| {
                    if point < r.len() {
                        true
                    } else {
                        point -= r.len();
                        false
                    }
                })
                .expect("left > 0")
        };
        let bucket = &mut remaining[tier];
        let pick = rng.random_range(0..bucket.len());
        indices.push(bucket.swap_remove(pick));
    }

    BatchDraw {
        indices,
        shortfall: n > subset.len(),
    }
}
