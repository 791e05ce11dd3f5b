//! Orchestration behind the CLI: dataset and fixture ingestion, the reward
//! fixture runner, simulation output persistence, scheduling I/O, and judge
//! construction.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentConfig, JudgeBackend, JudgeConfig};
use crate::curriculum::{blend_tiers, TaskSample};
use crate::judge::{CachingJudge, FallbackJudge, JudgeClient, RemoteJudge, StubJudge};
use crate::reward::{score, Domain, RewardConfig, RewardRequest};
use crate::sched::{balance_ranks, pack_microsteps, CostMode, MicroStepPlan, RankAssignment, WorkItem};
use crate::sim::{run_experiment, ExperimentOutcome, SimError, SimTask};

/// Environment variable selecting the remote judge backend.
pub const JUDGE_URL_ENV: &str = "RLCS_JUDGE_URL";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    ParseLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Reward(#[from] crate::reward::RewardError),
    #[error(transparent)]
    Sched(#[from] crate::sched::SchedError),
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| HarnessError::ParseLine {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// One dataset row. Offline difficulty may come as a tier, a human tier, or
/// both (blended by rounded half-up average); an explicit initial skill
/// overrides the synthetic learner's tier-midpoint default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub domain: String,
    pub prompt: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offline_tier: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_tier: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_skill: Option<f64>,
}

/// Load a JSON Lines dataset.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, HarnessError> {
    read_jsonl(path)
}

/// Turn dataset rows into simulator tasks under a tier count. Rows without
/// any difficulty label land in the middle tier.
pub fn dataset_to_tasks(records: &[DatasetRecord], tier_count: usize) -> Vec<SimTask> {
    records
        .iter()
        .map(|r| {
            let tier = match (r.offline_tier, r.human_tier) {
                (Some(o), Some(h)) => blend_tiers(o, h),
                (Some(o), None) => o,
                (None, Some(h)) => h,
                (None, None) => tier_count / 2,
            }
            .min(tier_count - 1);
            SimTask {
                sample: TaskSample {
                    id: r.id.clone(),
                    domain: r.domain.clone(),
                    prompt: r.prompt.clone(),
                    reference: r.reference.clone(),
                    offline_tier: tier,
                    blended_pass_rate: 0.0,
                    exposures: 0,
                },
                initial_skill: r.initial_skill,
            }
        })
        .collect()
}

/// One reward fixture: expected score with a comparison tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureCase {
    pub domain: String,
    pub question: String,
    pub reference: String,
    pub candidate: String,
    pub expect_score: f64,
    pub tol: f64,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub verifiable: bool,
}

fn default_true() -> bool {
    true
}

#[allow(clippy::trivially_copy_pass_by_ref)]
fn is_true(b: &bool) -> bool {
    *b
}

/// Load a JSON Lines fixture corpus.
pub fn load_fixtures(path: &Path) -> Result<Vec<FixtureCase>, HarnessError> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureFailure {
    pub case_index: usize,
    pub domain: String,
    pub candidate: String,
    pub expected: f64,
    pub got: f64,
    pub diagnostic: String,
}

/// Per-domain pass counts plus the failures.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub per_domain: BTreeMap<String, (usize, usize)>,
    pub failures: Vec<FixtureFailure>,
    pub total: usize,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Run the reward system over a fixture corpus.
pub fn run_verify(
    fixtures: &[FixtureCase],
    reward_cfg: &RewardConfig,
    judge: &dyn JudgeClient,
) -> Result<VerifyReport, HarnessError> {
    let mut report = VerifyReport::default();
    for (idx, case) in fixtures.iter().enumerate() {
        let domain: Domain = case
            .domain
            .parse()
            .map_err(|e: crate::reward::RewardError| HarnessError::ParseLine {
                path: PathBuf::from("<fixtures>"),
                line: idx + 1,
                message: e.to_string(),
            })?;
        let mut request = RewardRequest::new(domain, &case.question, &case.reference, &case.candidate);
        request.verifiable = case.verifiable;
        let result = score(&request, judge, reward_cfg)?;
        let entry = report.per_domain.entry(case.domain.clone()).or_insert((0, 0));
        entry.1 += 1;
        report.total += 1;
        if (result.score - case.expect_score).abs() <= case.tol {
            entry.0 += 1;
        } else {
            report.failures.push(FixtureFailure {
                case_index: idx,
                domain: case.domain.clone(),
                candidate: case.candidate.clone(),
                expected: case.expect_score,
                got: result.score,
                diagnostic: result.diagnostic,
            });
        }
    }
    Ok(report)
}

/// Build the configured judge backend. `RLCS_JUDGE_URL` in the environment
/// forces the remote backend at that URL.
pub fn build_judge(config: &JudgeConfig) -> Result<Box<dyn JudgeClient>, HarnessError> {
    let env_url = std::env::var(JUDGE_URL_ENV).ok().filter(|u| !u.is_empty());
    let backend = if env_url.is_some() {
        JudgeBackend::Remote
    } else {
        config.backend
    };
    let inner: Box<dyn JudgeClient> = match backend {
        JudgeBackend::Fallback => Box::new(FallbackJudge),
        JudgeBackend::Stub => match &config.stub_table {
            Some(path) => Box::new(StubJudge::from_jsonl(path).map_err(|source| {
                HarnessError::Io {
                    path: path.clone(),
                    source,
                }
            })?),
            None => Box::new(StubJudge::new()),
        },
        JudgeBackend::Remote => {
            let url = env_url
                .or_else(|| config.url.clone())
                .ok_or_else(|| crate::config::ConfigError::Invalid(
                    "remote judge requires a url".into(),
                ))?;
            Box::new(RemoteJudge::new(
                &url,
                Duration::from_millis(config.timeout_ms),
                config.retries,
            ))
        }
    };
    Ok(if config.cache {
        Box::new(CachingJudge::new(BoxedJudge(inner)))
    } else {
        inner
    })
}

/// Newtype so a boxed client can sit inside the caching wrapper.
struct BoxedJudge(Box<dyn JudgeClient>);

impl JudgeClient for BoxedJudge {
    fn judge(
        &self,
        question: &str,
        reference: &str,
        candidate: &str,
        domain: &str,
    ) -> Result<crate::judge::JudgeVerdict, crate::judge::JudgeError> {
        self.0.judge(question, reference, candidate, domain)
    }
}

/// Output paths of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationArtifacts {
    pub metrics_csv: PathBuf,
    pub events_jsonl: PathBuf,
    pub final_state_json: PathBuf,
}

/// Run the experiment and persist metrics CSV, JSONL events, and the final
/// state under `out_dir`.
pub fn run_simulation(
    config: &ExperimentConfig,
    dataset: &[DatasetRecord],
    out_dir: &Path,
) -> Result<(ExperimentOutcome, SimulationArtifacts), HarnessError> {
    let tasks = dataset_to_tasks(dataset, config.curriculum.tier_count);
    let outcome = run_experiment(config, &tasks)?;
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let artifacts = SimulationArtifacts {
        metrics_csv: out_dir.join("metrics.csv"),
        events_jsonl: out_dir.join("events.jsonl"),
        final_state_json: out_dir.join("final_state.json"),
    };
    let write = |path: &Path, contents: String| -> Result<(), HarnessError> {
        std::fs::write(path, contents).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    write(&artifacts.metrics_csv, outcome.log.to_csv())?;
    write(&artifacts.events_jsonl, outcome.log.to_jsonl())?;
    write(
        &artifacts.final_state_json,
        serde_json::to_string_pretty(&outcome.final_state).expect("state serializes"),
    )?;
    Ok((outcome, artifacts))
}

/// Load schedule items from JSON Lines `{"id","length"}` records.
pub fn load_work_items(path: &Path, cost_mode: CostMode) -> Result<Vec<WorkItem>, HarnessError> {
    let mut items: Vec<WorkItem> = read_jsonl(path)?;
    for item in &mut items {
        item.resolve_cost(cost_mode);
    }
    Ok(items)
}

/// Combined scheduler output for the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleOutput {
    pub assignment: RankAssignment,
    pub plan: MicroStepPlan,
}

pub fn run_schedule(
    items: &[WorkItem],
    ranks: usize,
    capacity: usize,
) -> Result<ScheduleOutput, HarnessError> {
    let plan = pack_microsteps(items, capacity)?;
    Ok(ScheduleOutput {
        assignment: balance_ranks(items, ranks),
        plan,
    })
}

/// Quick embedded sanity checks for the `selftest` subcommand: one line per
/// check, true when it passed.
pub fn selftest() -> Vec<(&'static str, bool)> {
    use crate::expansion::ExpansionState;
    use crate::geom::{adapt_table, EmbeddingTable, PatchGrid};
    use crate::parser::{parse_response, ParseMode};
    use crate::reward::{numeric_equivalent, verify_ocr};
    use crate::sim::group_advantages;

    let mut checks = Vec::new();

    let parsed = parse_response("<think>a</think><answer>b</answer>", ParseMode::Thinking);
    checks.push((
        "parser splits the tagged template",
        parsed.map(|r| r.think_content == "a" && r.answer_content == "b").unwrap_or(false),
    ));

    checks.push((
        "math accepts 43 == 43.0",
        numeric_equivalent("43", "43.0", 1e-4),
    ));
    checks.push((
        "ocr scores 43 vs 43.0 below 1",
        verify_ocr("43", "43.0").score < 1.0,
    ));

    let mut ema = ExpansionState::<f64>::standard();
    for _ in 0..100 {
        ema.observe_not_valid_rate(0.5);
    }
    checks.push(("expansion ema converges to 2", (ema.ema - 2.0).abs() < 1e-4));

    let adv = group_advantages(&[1.0f64, 0.0, 0.0, 1.0], 0.0);
    checks.push((
        "group advantages normalize to unit scores",
        adv == vec![1.0, -1.0, -1.0, 1.0],
    ));

    let table = EmbeddingTable::from_fn(4, 4, 2, |y, x, d| (y * 7 + x * 3 + d) as f64);
    let adapted = adapt_table(&table, &PatchGrid::new(4, 4));
    let identity = adapted
        .values()
        .iter()
        .zip(table.values())
        .all(|(a, b)| (a - b).abs() < 1e-9);
    checks.push(("bicubic identity at native resolution", identity));

    let plan = pack_microsteps(
        &[
            WorkItem::new("a", 7),
            WorkItem::new("b", 6),
            WorkItem::new("c", 3),
            WorkItem::new("d", 3),
            WorkItem::new("e", 2),
        ],
        10,
    );
    checks.push((
        "ffd packs the known instance into 3 bins",
        plan.map(|p| p.bin_count() == 3).unwrap_or(false),
    ));

    let assignment = balance_ranks(
        &[
            WorkItem::new("a", 9),
            WorkItem::new("b", 1),
            WorkItem::new("c", 5),
            WorkItem::new("d", 5),
        ],
        2,
    );
    checks.push(("lpt balances the known instance to 10", assignment.max_load() == 10.0));

    checks
}
