//! `rlcs` command line: reward fixture verification, closed-loop simulation,
//! rollout scheduling, embedding-table resampling, and a quick selftest.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rlcs_core::config::ExperimentConfig;
use rlcs_core::geom::{adapt_table, EmbeddingTable, PatchGrid};
use rlcs_core::harness::{
    build_judge, load_dataset, load_fixtures, load_work_items, run_schedule, run_simulation,
    run_verify, selftest,
};
use rlcs_core::Scalar;

#[derive(Parser)]
#[command(name = "rlcs", version, about = "Verifiable-reward RL stage machinery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the reward system over a fixture corpus and report per-domain
    /// pass counts. Exits nonzero on the first mismatch.
    Verify {
        /// Fixture corpus (JSON Lines).
        fixtures: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the closed training loop and write metrics.csv, events.jsonl and
    /// final_state.json.
    Simulate {
        /// Dataset (JSON Lines).
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override curriculum sampling on/off.
        #[arg(long)]
        curriculum: Option<bool>,
        /// Override dynamic sampling expansion on/off.
        #[arg(long)]
        expansion: Option<bool>,
        /// Override the iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Balance items across ranks and pack them into micro-steps; emits the
    /// assignment and plan as JSON on stdout.
    Schedule {
        /// Work items (JSON Lines {"id","length"}).
        items: PathBuf,
        #[arg(long)]
        ranks: usize,
        #[arg(long)]
        capacity: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Resample an embedding table (JSON) onto a new patch grid.
    Geom {
        /// Input table: {"values": [[[...], ...], ...]} (H x W x D).
        table: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run embedded sanity checks.
    Selftest,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TableFile {
    values: Vec<Vec<Vec<Scalar>>>,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Verify { fixtures, config } => {
            let config = config.load()?;
            let cases = load_fixtures(&fixtures)?;
            let judge = build_judge(&config.judge)?;
            let report = run_verify(&cases, &config.reward, judge.as_ref())?;
            for (domain, (passed, total)) in &report.per_domain {
                println!("{domain}: {passed}/{total}");
            }
            println!("total: {} cases, {} failures", report.total, report.failures.len());
            if let Some(first) = report.failures.first() {
                eprintln!(
                    "first failure: case {} ({}): candidate {:?} expected {} got {} ({})",
                    first.case_index,
                    first.domain,
                    first.candidate,
                    first.expected,
                    first.got,
                    first.diagnostic
                );
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            dataset,
            config,
            out,
            curriculum,
            expansion,
            iterations,
        } => {
            let mut config = config.load()?;
            if let Some(on) = curriculum {
                config.curriculum.enabled = on;
            }
            if let Some(on) = expansion {
                config.expansion.enabled = on;
            }
            if let Some(n) = iterations {
                config.iterations = n;
            }
            let records = load_dataset(&dataset)?;
            let (outcome, artifacts) = run_simulation(&config, &records, &out)?;
            println!(
                "{} iterations -> {}",
                outcome.log.rows.len(),
                artifacts.metrics_csv.display()
            );
            if let Some(last) = outcome.log.final_row() {
                println!(
                    "final mean_skill {:.4}, valid_fill {:.3}, ema {:.3}",
                    last.mean_skill, last.valid_fill, last.ema
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Schedule {
            items,
            ranks,
            capacity,
            config,
        } => {
            let config = config.load()?;
            if ranks == 0 {
                bail!("--ranks must be at least 1");
            }
            let items = load_work_items(&items, config.scheduler.cost_mode)?;
            let output = run_schedule(&items, ranks, capacity)?;
            println!("{}", serde_json::to_string_pretty(&output)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Geom {
            table,
            height,
            width,
            out,
        } => {
            if height == 0 || width == 0 {
                bail!("--height and --width must be at least 1");
            }
            let text = std::fs::read_to_string(&table)
                .with_context(|| format!("reading {}", table.display()))?;
            let parsed: TableFile =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", table.display()))?;
            let h = parsed.values.len();
            let w = parsed.values.first().map(Vec::len).unwrap_or(0);
            let d = parsed
                .values
                .first()
                .and_then(|row| row.first())
                .map(Vec::len)
                .unwrap_or(0);
            let flat: Vec<Scalar> = parsed.values.iter().flatten().flatten().copied().collect();
            let input = EmbeddingTable::new(h, w, d, flat)
                .map_err(|e| anyhow::anyhow!("{}: {e}", table.display()))?;
            let adapted = adapt_table(&input, &PatchGrid::new(height, width));

            let mut nested = Vec::with_capacity(height);
            for y in 0..height {
                let mut row = Vec::with_capacity(width);
                for x in 0..width {
                    row.push(adapted.at(y, x).to_vec());
                }
                nested.push(row);
            }
            let rendered = serde_json::to_string_pretty(&TableFile { values: nested })?;
            match out {
                Some(path) => std::fs::write(&path, rendered)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{rendered}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let checks = selftest();
            let mut ok = true;
            for (name, passed) in &checks {
                println!("{} {name}", if *passed { "PASS" } else { "FAIL" });
                ok &= passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
