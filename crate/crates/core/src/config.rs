//! Experiment configuration: a single JSON document with strict keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{CurriculumError, CurriculumState, OnlineGrading};
use crate::expansion::ExpansionState;
use crate::reward::RewardConfig;
use crate::sched::CostMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Target post-filter batch size B.
    pub batch_size: usize,
    /// Responses per rollout group G.
    pub group_size: usize,
    pub iterations: usize,
    pub curriculum: CurriculumConfig,
    pub expansion: ExpansionConfig,
    pub reward: RewardConfig,
    pub scheduler: SchedulerConfig,
    pub learner: LearnerConfig,
    pub judge: JudgeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            batch_size: 32,
            group_size: 8,
            iterations: 100,
            curriculum: CurriculumConfig::default(),
            expansion: ExpansionConfig::default(),
            reward: RewardConfig::default(),
            scheduler: SchedulerConfig::default(),
            learner: LearnerConfig::default(),
            judge: JudgeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub enabled: bool,
    pub tier_count: usize,
    pub tier_edges: Vec<f64>,
    pub blend_factor: f64,
    /// Overrides the tent profile when set.
    pub base_weights: Option<Vec<f64>>,
    pub online_grading: OnlineGrading,
    /// Static per-domain mixing ratio; unlisted domains are not drawn.
    pub domain_mix: Option<BTreeMap<String, f64>>,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            tier_count: 5,
            tier_edges: vec![0.1, 0.3, 0.7, 0.9],
            blend_factor: 0.8,
            base_weights: None,
            online_grading: OnlineGrading::Fraction,
            domain_mix: None,
        }
    }
}

impl CurriculumConfig {
    pub fn build_state(&self) -> Result<CurriculumState, CurriculumError> {
        let mut state =
            CurriculumState::new(self.tier_count, self.tier_edges.clone(), self.blend_factor)?;
        if let Some(base) = &self.base_weights {
            state = state.with_base_weights(base.clone())?;
        }
        state.online_grading = self.online_grading;
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionConfig {
    pub enabled: bool,
    pub beta: f64,
    pub cap: f64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            beta: 0.9,
            cap: 4.0,
        }
    }
}

impl ExpansionConfig {
    pub fn build_state(&self) -> ExpansionState<f64> {
        ExpansionState::new(self.beta, self.cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub ranks: usize,
    /// Micro-step context length in tokens.
    pub capacity: usize,
    pub cost_mode: CostMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            ranks: 4,
            capacity: 32_768,
            cost_mode: CostMode::Length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// Logistic improvement step per trained group.
    pub learn_rate: f64,
    /// Multiplier on the pass probability of truncated responses.
    pub truncation_penalty: f64,
    /// Think-length cap in surrogate tokens; longer responses are
    /// force-answered.
    pub length_cap: usize,
    /// Continuous rewards at or above this count as correct.
    pub success_threshold: f64,
    /// Think-length model: mean = base * (1 + slope * (1 - p)), lognormal
    /// spread sigma.
    pub length_base: usize,
    pub length_difficulty_slope: f64,
    pub length_sigma: f64,
    /// Uniform jitter applied to tier-midpoint initial skills.
    pub skill_jitter: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            learn_rate: 0.05,
            truncation_penalty: 0.8,
            length_cap: 2048,
            success_threshold: 0.99,
            length_base: 200,
            length_difficulty_slope: 2.0,
            length_sigma: 0.35,
            skill_jitter: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeBackend {
    #[default]
    Stub,
    Fallback,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeConfig {
    pub backend: JudgeBackend,
    /// JSON Lines stub table for the stub backend.
    pub stub_table: Option<PathBuf>,
    /// Base URL for the remote backend.
    pub url: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Exact-key verdict cache; off by default for determinism.
    pub cache: bool,
    /// Opaque per-deployment judge prompt, carried in config only.
    pub prompt: Option<String>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            backend: JudgeBackend::Stub,
            stub_table: None,
            url: None,
            timeout_ms: 10_000,
            retries: 2,
            cache: false,
            prompt: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.batch_size == 0 {
            return invalid("batch_size must be at least 1");
        }
        if self.group_size < 2 {
            return invalid("group_size must be at least 2");
        }
        self.curriculum
            .build_state()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..1.0).contains(&self.expansion.beta) {
            return invalid("expansion.beta must lie in [0, 1)");
        }
        if self.expansion.cap < 1.0 {
            return invalid("expansion.cap must be at least 1");
        }
        if self.scheduler.ranks == 0 {
            return invalid("scheduler.ranks must be at least 1");
        }
        if self.scheduler.capacity == 0 {
            return invalid("scheduler.capacity must be at least 1");
        }
        let l = &self.learner;
        if l.learn_rate < 0.0 || !(0.0..=1.0).contains(&l.truncation_penalty) {
            return invalid("learner rates out of range");
        }
        if !(0.0 < l.success_threshold && l.success_threshold <= 1.0) {
            return invalid("learner.success_threshold must lie in (0, 1]");
        }
        if l.length_cap == 0 || l.length_base == 0 {
            return invalid("learner lengths must be positive");
        }
        if l.length_sigma < 0.0 || l.length_difficulty_slope < 0.0 || l.skill_jitter < 0.0 {
            return invalid("learner length model parameters must be nonnegative");
        }
        if let Some(mix) = &self.curriculum.domain_mix {
            if mix.values().any(|w| *w < 0.0) || mix.values().sum::<f64>() <= 0.0 {
                return invalid("curriculum.domain_mix must be nonnegative with positive sum");
            }
        }
        if self.judge.backend == JudgeBackend::Remote && self.judge.url.is_none() {
            return invalid("judge.backend = remote requires judge.url");
        }
        Ok(())
    }
}
