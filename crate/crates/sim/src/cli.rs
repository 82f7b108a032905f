//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coalition_core::textual::{MediatorOption, PromptSet};

use crate::config::{ConfigError, ExperimentConfig, Grid, Space};
use crate::harness::{
    summarize, write_results, write_trajectory, Engine, ExperimentOutput, Manifest,
    RunError, RunRow,
};
use crate::providers::transcript::TranscriptWriter;
use crate::providers::mock::MockSettings;
use crate::providers::{ProviderChoice, ProviderSettings, Providers};
use crate::stats::{one_way_anova, tukey_hsd};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;
pub const EXIT_ENGINE: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(m: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: m.to_string(),
        }
    }

    fn io(m: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_IO,
            message: m.to_string(),
        }
    }

    fn run(e: &RunError) -> Self {
        CliError {
            code: if e.is_provider() { EXIT_PROVIDER } else { EXIT_ENGINE },
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "coalition", version, about = "Mediator-driven coalition formation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; every file is written inside it.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// mock, adapter, openai or replay:<path>.
    #[arg(long, default_value = "mock")]
    pub provider: ProviderChoice,
    /// Append every provider exchange to this transcript.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenKind {
    /// Three agents on a distance table, one scripted proposal.
    ThreeAgents,
    /// Planar grid over n, alpha, sigma and discipline.
    Euclidean,
    /// Sentence runs comparing the five mediator prompts.
    Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one process and write its trajectory.
    Run(Common),
    /// Run a parameter grid and write runs.csv, summary.csv, manifest.json.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also write one trajectory file per run.
        #[arg(long)]
        trajectories: bool,
    },
    /// ANOVA and Tukey HSD over a runs.csv.
    Stats {
        results: PathBuf,
        /// Column to group by.
        #[arg(long, default_value = "mediator_option")]
        by: String,
        /// Column to compare.
        #[arg(long, default_value = "iterations")]
        value: String,
        /// Family-wise significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Re-run a config offline from a recorded transcript.
    Replay {
        transcript: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print an example config.
    Gen {
        kind: GenKind,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs a parsed command, writing human output to `stdout`.
pub fn execute(cli: Cli, stdout: &mut String) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => cmd_run(&c, stdout),
        Command::Sweep { common, trajectories } => cmd_sweep(&common, trajectories, stdout),
        Command::Stats {
            results,
            by,
            value,
            alpha,
        } => cmd_stats(&results, &by, &value, alpha, stdout),
        Command::Replay {
            transcript,
            config,
            seed,
            out,
            jobs,
        } => {
            let common = Common {
                config,
                seed,
                out,
                provider: ProviderChoice::Replay(transcript),
                record: None,
                jobs,
            };
            let cfg = load(&common)?;
            if cfg.cells().len() == 1 && cfg.repetitions() == 1 {
                cmd_run(&common, stdout)
            } else {
                cmd_sweep(&common, false, stdout)
            }
        }
        Command::Gen { kind, out } => cmd_gen(kind, out.as_deref(), stdout),
    }
}

fn load(c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn engine(c: &Common, cfg: ExperimentConfig) -> Result<Engine, CliError> {
    let prompts = match &cfg.prompts {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read prompts {}: {e}", p.display())))?;
            PromptSet::from_json(&text).map_err(CliError::config)?
        }
        None => PromptSet::builtin(),
    };
    let mut providers = Providers::new(c.provider.clone(), cfg.providers.clone()).map_err(|e| CliError {
        code: EXIT_PROVIDER,
        message: e.to_string(),
    })?;
    if let Some(path) = &c.record {
        let w = TranscriptWriter::create(path)
            .map_err(|e| CliError::io(format!("cannot open transcript {}: {e}", path.display())))?;
        providers = providers.record_to(Arc::new(w));
    }
    Ok(Engine::new(cfg, providers, prompts))
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("cannot start workers: {e}")))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

pub fn cmd_run(c: &Common, stdout: &mut String) -> Result<(), CliError> {
    let cfg = load(c)?;
    let cells = cfg.cells();
    if cells.len() != 1 {
        return Err(CliError::config(format!(
            "run needs a single-cell grid, this one has {} cells; use sweep",
            cells.len()
        )));
    }
    let mut engine = engine(c, cfg)?;
    engine.keep_trajectory = true;
    let record = engine.run_one(&cells[0], 0).map_err(|e| CliError::run(&e))?;

    std::fs::create_dir_all(&c.out).map_err(CliError::io)?;
    let path = c.out.join("trajectory.jsonl");
    write_trajectory(&path, &record.trajectory).map_err(CliError::io)?;
    let _ = writeln!(
        stdout,
        "converged={} iterations={} winner_size={} quality={}",
        record.converged,
        record.iterations,
        record.winner_size.map_or("-".into(), |s| s.to_string()),
        fmt_opt(record.quality),
    );
    let _ = writeln!(stdout, "trajectory: {}", path.display());
    Ok(())
}

pub fn cmd_sweep(c: &Common, trajectories: bool, stdout: &mut String) -> Result<(), CliError> {
    let cfg = load(c)?;
    let cells = cfg.cells();
    let reps = cfg.repetitions();
    let mut engine = engine(c, cfg)?;
    engine.keep_trajectory = trajectories;
    let cancel = engine.cancel.clone();
    // a second sweep in the same process keeps the first handler
    let _ = ctrlc::set_handler(move || cancel.store(true, Ordering::Relaxed));

    let out: ExperimentOutput = pool(c.jobs)?.install(|| engine.run_experiment(&cells, reps));
    let rows: Vec<RunRow> = out.records.iter().map(RunRow::from).collect();
    let summaries = summarize(&cells, &out.records, engine.config.iteration_cap);
    let manifest = Manifest::new(&engine.config, c.provider.to_string(), &cells, &out);
    write_results(&c.out, &rows, &summaries, &manifest).map_err(CliError::io)?;
    if trajectories {
        let dir = c.out.join("trajectories");
        std::fs::create_dir_all(&dir).map_err(CliError::io)?;
        for r in &out.records {
            let p = dir.join(format!("cell{}-rep{}.jsonl", r.cell.index, r.rep));
            write_trajectory(&p, &r.trajectory).map_err(CliError::io)?;
        }
    }

    let _ = writeln!(
        stdout,
        "{:>4} {:>5} {:>6} {:>6} {:>5} {:>5} {:>2} {:>6} {:>26} {:>9} {:>12}",
        "cell", "n", "alpha", "sigma", "C", "I", "g", "option", "Mean Number of Iterations",
        "converged", "mean quality"
    );
    for s in &summaries {
        let _ = writeln!(
            stdout,
            "{:>4} {:>5} {:>6} {:>6} {:>5} {:>5} {:>2} {:>6} {:>26.2} {:>8.0}% {:>12}",
            s.cell,
            s.n,
            s.alpha,
            s.sigma,
            s.discipline,
            s.noisy_init,
            s.g,
            s.mediator_option,
            s.mean_iterations,
            s.convergence_rate * 100.0,
            fmt_opt(s.mean_quality),
        );
    }
    let _ = writeln!(stdout, "results: {}", c.out.display());
    if out.truncated {
        let _ = writeln!(stdout, "interrupted: results are partial");
    }
    if let Some(first) = out.failures.first() {
        for f in &out.failures {
            let _ = writeln!(stdout, "failed: {f}");
        }
        return Err(CliError {
            message: format!("{} run(s) failed; first: {first}", out.failures.len()),
            ..CliError::run(&first.error)
        });
    }
    Ok(())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::config(format!("results have no column {name:?}")))
}

pub fn cmd_stats(path: &Path, by: &str, value: &str, alpha: f64, stdout: &mut String) -> Result<(), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(CliError::config)?.clone();
    let (bi, vi) = (column(&headers, by)?, column(&headers, value)?);
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::config(format!("malformed results: {e}")))?;
        let key = rec[bi].to_owned();
        let v: f64 = rec[vi].parse().map_err(|_| {
            CliError::config(format!("row {}: {value} is not a number: {:?}", line + 2, &rec[vi]))
        })?;
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(v),
            None => groups.push((key, vec![v])),
        }
    }
    groups.sort_by(|a, b| match (a.0.parse::<f64>(), b.0.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.0.cmp(&b.0),
    });
    if groups.len() < 2 {
        return Err(CliError::config(format!(
            "needs >= 2 groups, found {} distinct {by} value(s)",
            groups.len()
        )));
    }
    let data: Vec<Vec<f64>> = groups.iter().map(|(_, g)| g.clone()).collect();
    let anova = one_way_anova(&data).map_err(CliError::config)?;
    let tukey = tukey_hsd(&data, alpha).map_err(CliError::config)?;

    let _ = writeln!(stdout, "{value} by {by}");
    for (k, g) in &groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        let _ = writeln!(stdout, "  {by}={k:<8} n={:<5} mean={m:.4}", g.len());
    }
    let _ = writeln!(
        stdout,
        "ANOVA F={} p={:.6e} df=({}, {})",
        anova.f, anova.p, anova.df_between, anova.df_within
    );
    let _ = writeln!(
        stdout,
        "Tukey HSD (family-wise alpha {alpha})\n{:>10} {:>10} {:>12} {:>12} {:>12} {:>12} {:>7}",
        "group1", "group2", "meandiff", "lower", "upper", "p-adj", "reject"
    );
    for p in &tukey {
        let _ = writeln!(
            stdout,
            "{:>10} {:>10} {:>12.4} {:>12.4} {:>12.4} {:>12.6} {:>7}",
            groups[p.i].0, groups[p.j].0, p.diff, p.lower, p.upper, p.p_adj, p.significant
        );
    }
    Ok(())
}

pub fn example_config(kind: GenKind) -> String {
    let cfg = match kind {
        GenKind::ThreeAgents => return include_str!("../fixtures/three_agents.json").to_owned(),
        GenKind::Euclidean => ExperimentConfig {
            space: Space::Euclidean2d,
            seed: 1,
            repetitions: Some(50),
            grid: Grid {
                n: vec![10, 20, 30, 40, 50],
                alpha: vec![-1.0, 0.0, 1.0],
                sigma: vec![0.0, 10.0],
                discipline: vec![true, false],
                ..Grid::default()
            },
            ..ExperimentConfig::default()
        },
        GenKind::Options => ExperimentConfig {
            space: Space::Textual,
            seed: 1,
            repetitions: Some(50),
            grid: Grid {
                n: vec![10],
                mediator_option: MediatorOption::ALL.to_vec(),
                ..Grid::default()
            },
            providers: ProviderSettings {
                mock: MockSettings {
                    dimension: 64,
                    ..MockSettings::default()
                },
                ..ProviderSettings::default()
            },
            ..ExperimentConfig::default()
        },
    };
    serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n"
}

fn cmd_gen(kind: GenKind, out: Option<&Path>, stdout: &mut String) -> Result<(), CliError> {
    let text = example_config(kind);
    match out {
        Some(p) => std::fs::write(p, text).map_err(CliError::io),
        None => {
            stdout.push_str(&text);
            Ok(())
        }
    }
}
