//! Deterministic synthetic stand-in for the policy.
//!
//! Each sample carries a latent pass probability. Rollout groups draw G
//! correctness outcomes, model think-length (with forced truncation past the
//! cap), and produce structured responses. OCR and grounding prompts carry
//! concrete payloads so their verifiers run for real inside the loop; other
//! domains are scored directly from the drawn outcome. A logistic
//! improvement step stands in for the gradient update, so curriculum effects
//! are measurable end-to-end.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::curriculum::{draw_batch_subset, CurriculumError, TaskSample};
use crate::expansion::select_informative;
use crate::judge::FallbackJudge;
use crate::num::Real;
use crate::parser::{render_bare, render_boxed, StructuredResponse};
use crate::reward::{score, Domain, RewardConfig, RewardRequest};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("task pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
}

/// Think-length model: mean length grows with difficulty, lognormal spread.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthModel {
    pub base: usize,
    pub difficulty_slope: f64,
    pub sigma: f64,
}

impl LengthModel {
    pub fn mean_len(&self, pass_prob: f64) -> f64 {
        self.base as f64 * (1.0 + self.difficulty_slope * (1.0 - pass_prob))
    }

    pub fn sample(&self, pass_prob: f64, rng: &mut impl Rng) -> usize {
        let mean = self.mean_len(pass_prob).max(1.0);
        let dist = LogNormal::new(mean.ln(), self.sigma).expect("finite parameters");
        dist.sample(rng).round().max(1.0) as usize
    }
}

/// The G responses generated for one sample in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub sample_id: String,
    pub responses: Vec<StructuredResponse>,
    pub rewards: Vec<f64>,
    pub correct_count: usize,
    /// Mixed correctness: neither all-correct nor all-incorrect.
    pub valid: bool,
}

/// Latent per-sample pass probabilities plus the update rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLearner {
    pub skill: BTreeMap<String, f64>,
    pub learn_rate: f64,
    pub length_model: LengthModel,
    pub truncation_penalty: f64,
}

impl SyntheticLearner {
    pub fn skill_of(&self, sample_id: &str) -> f64 {
        self.skill.get(sample_id).copied().unwrap_or(0.5)
    }

    pub fn mean_skill(&self) -> f64 {
        if self.skill.is_empty() {
            return 0.0;
        }
        self.skill.values().sum::<f64>() / self.skill.len() as f64
    }

    pub fn fraction_above(&self, threshold: f64) -> f64 {
        if self.skill.is_empty() {
            return 0.0;
        }
        self.skill.values().filter(|p| **p > threshold).count() as f64 / self.skill.len() as f64
    }

    /// Pass probability after the truncation penalty, if any.
    pub fn effective_pass_prob(&self, pass_prob: f64, truncated: bool) -> f64 {
        if truncated {
            pass_prob * self.truncation_penalty
        } else {
            pass_prob
        }
    }

    /// Generate one rollout group for a sample. Each response draws a think
    /// length, is force-answered when it exceeds the cap, and succeeds with
    /// the (possibly penalized) pass probability.
    pub fn rollout_group(
        &self,
        sample: &TaskSample,
        group_size: usize,
        length_cap: usize,
        success_threshold: f64,
        reward_cfg: &RewardConfig,
        rng: &mut impl Rng,
    ) -> RolloutGroup {
        debug_assert!(group_size >= 2);
        let pass_prob = self.skill_of(&sample.id);
        let mut responses = Vec::with_capacity(group_size);
        let mut rewards = Vec::with_capacity(group_size);
        for k in 0..group_size {
            let think_len = self.length_model.sample(pass_prob, rng);
            let over_cap = think_len >= length_cap;
            let effective = self.effective_pass_prob(pass_prob, over_cap);
            let correct = rng.random::<f64>() < effective;
            let (candidate, reward) = synth_outcome(sample, correct, k, reward_cfg, rng);

            let think = format!("pass {k} of working through sample {}", sample.id);
            let answer = render_boxed(&candidate);
            let mut resp = StructuredResponse {
                raw_text: render_bare(&think, &answer),
                think_content: think,
                answer_content: answer,
                boxed_span: Some(candidate),
                truncated: false,
                token_length: think_len,
            };
            if over_cap {
                resp = force_answer(resp, length_cap);
            }
            responses.push(resp);
            rewards.push(reward);
        }
        let correct_count = rewards.iter().filter(|r| **r >= success_threshold).count();
        RolloutGroup {
            sample_id: sample.id.clone(),
            valid: correct_count > 0 && correct_count < group_size,
            responses,
            rewards,
            correct_count,
        }
    }

    /// Logistic improvement on every sample covered by the given groups:
    /// p <- clamp(p + eta * p * (1 - p)).
    pub fn train_step(&mut self, groups: &[&RolloutGroup]) {
        for group in groups {
            if let Some(p) = self.skill.get_mut(&group.sample_id) {
                *p = (*p + self.learn_rate * *p * (1.0 - *p)).clamp(0.0, 1.0);
            }
        }
    }
}

/// Candidate payload and reward for one drawn outcome. OCR and grounding run
/// their real verifiers over synthesized payloads; other domains map the
/// outcome to a direct binary reward.
fn synth_outcome(
    sample: &TaskSample,
    correct: bool,
    response_idx: usize,
    reward_cfg: &RewardConfig,
    rng: &mut impl Rng,
) -> (String, f64) {
    match sample.domain.as_str() {
        "ocr" => {
            let candidate = if correct {
                sample.reference.clone()
            } else {
                corrupt_text(&sample.reference, rng)
            };
            let req = RewardRequest::new(Domain::Ocr, &sample.prompt, &sample.reference, &candidate);
            let reward = score(&req, &FallbackJudge, reward_cfg)
                .expect("ocr verification is total")
                .score;
            (candidate, reward)
        }
        "grounding" => {
            let candidate = if correct {
                sample.reference.clone()
            } else {
                shift_boxes(&sample.reference)
            };
            let req = RewardRequest::new(
                Domain::Grounding,
                &sample.prompt,
                &sample.reference,
                &candidate,
            );
            let reward = match score(&req, &FallbackJudge, reward_cfg) {
                Ok(result) => result.score,
                // non-box reference: treat like a direct domain
                Err(_) => {
                    if correct {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            (candidate, reward)
        }
        _ => {
            let candidate = if correct {
                sample.reference.clone()
            } else {
                format!("{}_wrong_{response_idx}", sample.reference)
            };
            (candidate, if correct { 1.0 } else { 0.0 })
        }
    }
}

/// A few substitutions, enough to push the OCR score well under the success
/// threshold on short references.
fn corrupt_text(reference: &str, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = reference.chars().collect();
    if chars.is_empty() {
        return "?".to_string();
    }
    let edits = (chars.len() / 8).max(2);
    for _ in 0..edits {
        let idx = rng.random_range(0..chars.len());
        let replacement = (b'a' + rng.random_range(0..26u8)) as char;
        chars[idx] = if chars[idx] == replacement { '#' } else { replacement };
    }
    chars.into_iter().collect()
}

/// Push every box far out of place so the IoU drops to zero.
fn shift_boxes(reference: &str) -> String {
    match serde_json::from_str::<Vec<[f64; 4]>>(reference) {
        Ok(boxes) => {
            let shifted: Vec<[f64; 4]> = boxes
                .iter()
                .map(|b| {
                    let w = b[2] - b[0];
                    [b[0] + 2.0 * w + 1.0, b[1], b[2] + 2.0 * w + 1.0, b[3]]
                })
                .collect();
            serde_json::to_string(&shifted).expect("boxes serialize")
        }
        Err(_) => reference.to_string(),
    }
}

/// Close an over-long think section at the cap so an answer is still
/// produced and scored. No-op below the cap.
pub fn force_answer(mut resp: StructuredResponse, length_cap: usize) -> StructuredResponse {
    if resp.token_length < length_cap {
        return resp;
    }
    resp.truncated = true;
    resp.token_length = length_cap;
    if resp.answer_content.trim().is_empty() {
        resp.answer_content = "truncated".to_string();
    }
    resp
}

/// Group-relative advantages: (r - mean) / (std + eps) with population std.
/// Uniform groups (all-correct, all-incorrect, single response) yield
/// exactly zero everywhere.
pub fn group_advantages<R: Real>(rewards: &[R], eps: R) -> Vec<R> {
    if rewards.is_empty() {
        return Vec::new();
    }
    if rewards.iter().all(|r| *r == rewards[0]) {
        return vec![R::zero(); rewards.len()];
    }
    let n = R::of_usize(rewards.len());
    let mean = rewards.iter().copied().sum::<R>() / n;
    let variance = rewards
        .iter()
        .map(|r| (*r - mean) * (*r - mean))
        .sum::<R>()
        / n;
    let std = variance.sqrt();
    if std == R::zero() {
        return vec![R::zero(); rewards.len()];
    }
    rewards.iter().map(|r| (*r - mean) / (std + eps)).collect()
}

/// One pool entry: the curriculum sample plus an optional explicit initial
/// skill (defaults to the offline tier's midpoint, jittered).
#[derive(Debug, Clone, PartialEq)]
pub struct SimTask {
    pub sample: TaskSample,
    pub initial_skill: Option<f64>,
}

/// Per-iteration record of the training loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub mean_skill: f64,
    pub not_valid_rate: f64,
    pub ema: f64,
    pub valid_fill: f64,
    pub reward_mean: f64,
    pub tier_pops: Vec<usize>,
    /// Fraction of pool skills above 0.9; logged in the JSONL events only.
    pub frac_skill_above_90: f64,
}

/// Full run log. The CSV column order is fixed: iteration, mean_skill,
/// not_valid_rate, ema, valid_fill, reward_mean, tier_pop_0..T-1.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub tier_count: usize,
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn csv_header(tier_count: usize) -> String {
        let mut header = String::from("iteration,mean_skill,not_valid_rate,ema,valid_fill,reward_mean");
        for t in 0..tier_count {
            header.push_str(&format!(",tier_pop_{t}"));
        }
        header
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header(self.tier_count);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                row.iteration,
                row.mean_skill,
                row.not_valid_rate,
                row.ema,
                row.valid_fill,
                row.reward_mean
            ));
            for pop in &row.tier_pops {
                out.push_str(&format!(",{pop}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// Final pool/learner state after a run, for persistence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalState {
    pub skills: BTreeMap<String, f64>,
    pub blended_pass_rates: BTreeMap<String, f64>,
    pub tier_weights: Vec<f64>,
    pub expansion_ema: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub log: MetricsLog,
    pub final_state: FinalState,
}

/// Run the closed training loop for the configured number of iterations.
/// Deterministic under the config seed.
pub fn run_experiment(
    config: &ExperimentConfig,
    tasks: &[SimTask],
) -> Result<ExperimentOutcome, SimError> {
    config
        .validate()
        .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
    if tasks.is_empty() {
        return Err(SimError::EmptyPool);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curriculum = config.curriculum.build_state()?;
    let mut expansion = config.expansion.build_state();

    // Pool with blended rates seeded from offline tiers; learner skills from
    // explicit values or jittered tier midpoints.
    let mut pool: Vec<TaskSample> = Vec::with_capacity(tasks.len());
    let mut skills = BTreeMap::new();
    for task in tasks {
        let mut sample = task.sample.clone();
        if sample.offline_tier >= curriculum.tier_count {
            return Err(SimError::Curriculum(CurriculumError::TierOutOfRange {
                tier: sample.offline_tier,
                count: curriculum.tier_count,
            }));
        }
        let midpoint = curriculum
            .tier_midpoint(sample.offline_tier)
            .expect("tier validated");
        sample.blended_pass_rate = midpoint;
        let skill = task.initial_skill.unwrap_or_else(|| {
            let jitter = (rng.random::<f64>() * 2.0 - 1.0) * config.learner.skill_jitter;
            (midpoint + jitter).clamp(0.005, 0.995)
        });
        skills.insert(sample.id.clone(), skill);
        pool.push(sample);
    }
    let index_of: BTreeMap<String, usize> = pool
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.clone(), i))
        .collect();

    let mut learner = SyntheticLearner {
        skill: skills,
        learn_rate: config.learner.learn_rate,
        length_model: LengthModel {
            base: config.learner.length_base,
            difficulty_slope: config.learner.length_difficulty_slope,
            sigma: config.learner.length_sigma,
        },
        truncation_penalty: config.learner.truncation_penalty,
    };

    let batch = config.batch_size;
    let group_size = config.group_size;
    let mut rows = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let planned = if config.expansion.enabled {
            expansion.plan_rollout_count(batch)
        } else {
            batch
        };

        let draw_seed = rng.random::<u64>();
        let drawn = if config.curriculum.enabled {
            draw_with_mix(&curriculum, &pool, planned, draw_seed, config)
        } else {
            uniform_draw(pool.len(), planned, &mut rng)
        };

        let groups: Vec<RolloutGroup> = drawn
            .iter()
            .map(|idx| {
                learner.rollout_group(
                    &pool[*idx],
                    group_size,
                    config.learner.length_cap,
                    config.learner.success_threshold,
                    &config.reward,
                    &mut rng,
                )
            })
            .collect();

        let selection = select_informative(&groups, batch, group_size);
        if config.expansion.enabled {
            expansion.observe_not_valid_rate(selection.not_valid_rate);
        }

        // Advantages are computed per selected group (the training signal
        // this harness records); the reward mean covers the same set.
        let mut reward_sum = 0.0;
        let mut reward_count = 0usize;
        for gi in &selection.selected {
            let group = &groups[*gi];
            let _advantages = group_advantages(&group.rewards, 1e-8);
            reward_sum += group.rewards.iter().sum::<f64>();
            reward_count += group.rewards.len();
        }
        let reward_mean = if reward_count == 0 {
            0.0
        } else {
            reward_sum / reward_count as f64
        };

        // Online grading over every rolled-out group, applied after the
        // iteration's verification completes.
        for group in &groups {
            let idx = index_of[&group.sample_id];
            curriculum.grade_online(&mut pool[idx], group.correct_count, group_size);
        }

        let selected_groups: Vec<&RolloutGroup> =
            selection.selected.iter().map(|gi| &groups[*gi]).collect();
        learner.train_step(&selected_groups);

        let tier_pops = curriculum.tier_populations(&pool);
        if config.curriculum.enabled {
            curriculum.reweight(&tier_pops)?;
        }

        rows.push(MetricsRow {
            iteration,
            mean_skill: learner.mean_skill(),
            not_valid_rate: selection.not_valid_rate,
            ema: expansion.ema,
            valid_fill: selection.selected.len() as f64 / batch as f64,
            reward_mean,
            tier_pops,
            frac_skill_above_90: learner.fraction_above(0.9),
        });
    }

    Ok(ExperimentOutcome {
        log: MetricsLog {
            tier_count: curriculum.tier_count,
            rows,
        },
        final_state: FinalState {
            skills: learner.skill.clone(),
            blended_pass_rates: pool
                .iter()
                .map(|s| (s.id.clone(), s.blended_pass_rate))
                .collect(),
            tier_weights: curriculum.tier_weights.clone(),
            expansion_ema: expansion.ema,
        },
    })
}

/// Curriculum draw, honoring a static per-domain mix when configured.
fn draw_with_mix(
    curriculum: &crate::curriculum::CurriculumState,
    pool: &[TaskSample],
    n: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Vec<usize> {
    let Some(mix) = &config.curriculum.domain_mix else {
        let all: Vec<usize> = (0..pool.len()).collect();
        return draw_batch_subset(curriculum, pool, &all, n, seed).indices;
    };
    let total_weight: f64 = mix.values().sum();
    // Largest-remainder allocation of n slots across domains.
    let mut allocations: Vec<(String, usize, f64)> = mix
        .iter()
        .map(|(domain, w)| {
            let exact = n as f64 * w / total_weight;
            (domain.clone(), exact.floor() as usize, exact.fract())
        })
        .collect();
    let assigned: usize = allocations.iter().map(|(_, c, _)| *c).sum();
    allocations.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then_with(|| a.0.cmp(&b.0)));
    let slots = allocations.len();
    for k in 0..(n - assigned) {
        allocations[k % slots].1 += 1;
    }

    let mut drawn = Vec::with_capacity(n);
    for (offset, (domain, count, _)) in allocations.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let subset: Vec<usize> = pool
            .iter()
            .enumerate()
            .filter(|(_, s)| &s.domain == domain)
            .map(|(i, _)| i)
            .collect();
        if subset.is_empty() {
            continue;
        }
        let sub_draw = draw_batch_subset(
            curriculum,
            pool,
            &subset,
            *count,
            seed.wrapping_add(offset as u64 + 1),
        );
        drawn.extend(sub_draw.indices);
    }
    drawn
}

/// Uniform draw without replacement (partial Fisher-Yates).
fn uniform_draw(pool_len: usize, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..pool_len).collect();
    let take = n.min(pool_len);
    for i in 0..take {
        let j = rng.random_range(i..pool_len);
        indices.swap(i, j);
    }
    indices.truncate(take);
    indices
}
