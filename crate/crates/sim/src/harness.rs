//! Building instances for grid cells, running them in parallel, and
//! writing per-run rows, per-cell summaries and a manifest.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use coalition_core::dynamics::{run_process, ScriptedMediator};
use coalition_core::instance::{quality_metric, sample_ideal_points, sample_initial_noise, sample_status_quo};
use coalition_core::mediator::{AiMediator, ClosedForm, MediatorConfig, MediatorError};
use coalition_core::provider::ProviderError;
use coalition_core::seed::{child_seed, splitmix64};
use coalition_core::textual::{build_textual_instance, PromptSet, TextualCompromise, TextualConfig, TextualError};
use coalition_core::{
    Agent, CoalitionStructure, Distance, Metric, Point, ProcessConfig, ProcessError, Proposal,
    Provenance, RunOptions, TableMetric, TransitionRecord,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{CellSpec, ExperimentConfig, Space, TableFixture};
use crate::providers::Providers;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Textual(#[from] TextualError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error("{0}")]
    Setup(String),
    #[error("cancelled")]
    Cancelled,
}

impl RunError {
    /// Whether the root cause is a backend failure rather than the engine.
    pub fn is_provider(&self) -> bool {
        matches!(
            self,
            RunError::Provider(_)
                | RunError::Textual(TextualError::Provider(_))
                | RunError::Process(ProcessError::Mediator {
                    source: MediatorError::Textual {
                        source: TextualError::Provider(_),
                        ..
                    },
                    ..
                })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cell {cell} repetition {rep}: {error}")]
pub struct RunFailure {
    pub cell: usize,
    pub rep: usize,
    pub error: RunError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub cell: CellSpec,
    pub rep: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub winner_size: Option<usize>,
    pub quality: Option<f64>,
    /// Filled only when trajectories are kept.
    pub initial: Option<CoalitionStructure>,
    pub trajectory: Vec<TransitionRecord>,
}

pub fn run_id(cell: usize, rep: usize) -> String {
    format!("{cell}-{rep}")
}

/// Everything a run needs besides its cell and repetition.
pub struct Engine {
    pub config: ExperimentConfig,
    pub providers: Providers,
    pub prompts: PromptSet,
    pub keep_trajectory: bool,
    pub cancel: Arc<AtomicBool>,
}

impl Engine {
    pub fn new(config: ExperimentConfig, providers: Providers, prompts: PromptSet) -> Self {
        Engine {
            config,
            providers,
            prompts,
            keep_trajectory: false,
            cancel: Arc::new(AtomicBool::new(false)),
        }
    }

    fn process_config(&self, cell: &CellSpec, status_quo: Point, seed: u64) -> ProcessConfig {
        let mut cfg = ProcessConfig::new(status_quo, splitmix64(seed));
        cfg.discipline = cell.discipline;
        cfg.quorum = self.config.quorum;
        cfg.halt = self.config.halt;
        cfg.iteration_cap = self.config.iteration_cap;
        cfg
    }

    fn mediator_config(&self, cell: &CellSpec) -> MediatorConfig {
        let mut m = MediatorConfig::new(cell.alpha);
        m.centroid_mode = self.config.centroid;
        m
    }

    pub fn run_one(&self, cell: &CellSpec, rep: usize) -> Result<RunRecord, RunError> {
        if self.cancel.load(Ordering::Relaxed) {
            return Err(RunError::Cancelled);
        }
        let seed = child_seed(self.config.seed, cell.index as u64, rep as u64);
        match cell.space {
            Space::Euclidean2d => self.run_euclidean(cell, rep, seed),
            Space::Textual => self.run_textual(cell, rep, seed),
            Space::Table => self.run_table(cell, rep, seed),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish<D: Distance>(
        &self,
        cell: &CellSpec,
        rep: usize,
        seed: u64,
        ideals: &[Point],
        initial: CoalitionStructure,
        result: coalition_core::RunResult,
        metric: &D,
    ) -> Result<RunRecord, RunError> {
        let quality = match &result.winner {
            Some(w) if result.converged => Some(
                quality_metric(w, ideals, metric)
                    .map_err(|e| RunError::Process(ProcessError::Metric(e)))?,
            ),
            _ => None,
        };
        Ok(RunRecord {
            cell: cell.clone(),
            rep,
            seed,
            iterations: result.iterations,
            converged: result.converged,
            winner_size: result.winner.as_ref().map(|w| w.size()),
            quality,
            initial: self.keep_trajectory.then_some(initial),
            trajectory: result.trajectory,
        })
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            keep_trajectory: self.keep_trajectory,
        }
    }

    fn run_euclidean(&self, cell: &CellSpec, rep: usize, seed: u64) -> Result<RunRecord, RunError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let status_quo = sample_status_quo(&mut rng);
        let ideals = sample_ideal_points(cell.n, cell.g, &mut rng);
        let starts: Vec<(Point, Option<String>)> = ideals
            .iter()
            .map(|p| {
                let start = if cell.noisy_init {
                    sample_initial_noise(p, &mut rng)
                } else {
                    p.clone()
                };
                (start, None)
            })
            .collect();
        let agents = agents(&ideals, cell.sigma);
        let initial = CoalitionStructure::singletons(starts);
        let cfg = self.process_config(cell, status_quo, seed);
        let metric = Metric::euclidean(2);
        let mut mediator = AiMediator::new(self.mediator_config(cell), ClosedForm)
            .map_err(|e| RunError::Setup(e.to_string()))?;
        let result = run_process(&agents, initial.clone(), &cfg, &metric, &mut mediator, self.options())?;
        self.finish(cell, rep, seed, &ideals, initial, result, &metric)
    }

    fn run_textual(&self, cell: &CellSpec, rep: usize, seed: u64) -> Result<RunRecord, RunError> {
        let (mut generator, mut embedder) = self.providers.session(&run_id(cell.index, rep), seed)?;
        let tcfg = TextualConfig {
            agent_count: cell.n,
            mediator_option: cell.mediator_option,
            noisy_init: cell.noisy_init,
            ..self.config.textual.clone()
        };
        let inst = build_textual_instance(&tcfg, cell.sigma, &self.prompts, &mut generator, &mut embedder)?;
        let metric = Metric::sqrt_cosine(embedder.dimension());
        let initial = CoalitionStructure::singletons(inst.starts.clone());
        let cfg = self.process_config(cell, inst.status_quo.clone(), seed);
        let source = TextualCompromise::new(tcfg, self.prompts.clone(), generator, embedder);
        let mut mediator = AiMediator::new(self.mediator_config(cell), source)
            .map_err(|e| RunError::Setup(e.to_string()))?;
        let result = run_process(&inst.agents, initial.clone(), &cfg, &metric, &mut mediator, self.options())?;
        let ideals: Vec<Point> = inst.agents.iter().map(|a| a.ideal.clone()).collect();
        self.finish(cell, rep, seed, &ideals, initial, result, &metric)
    }

    fn run_table(&self, cell: &CellSpec, rep: usize, seed: u64) -> Result<RunRecord, RunError> {
        let fixture = self
            .config
            .table
            .as_ref()
            .ok_or_else(|| RunError::Setup("missing table section".into()))?;
        let (metric, ideals, status_quo, proposals) =
            table_instance(fixture).map_err(RunError::Setup)?;
        let agents = agents(&ideals, cell.sigma);
        let initial = CoalitionStructure::singletons(ideals.iter().map(|p| (p.clone(), None)).collect());
        let cfg = self.process_config(cell, status_quo, seed);
        let mut mediator = if fixture.cycle {
            ScriptedMediator::cycling(proposals)
        } else {
            ScriptedMediator::new(proposals)
        };
        let result = run_process(&agents, initial.clone(), &cfg, &metric, &mut mediator, self.options())?;
        self.finish(cell, rep, seed, &ideals, initial, result, &metric)
    }

    /// Runs every cell `repetitions` times on the current rayon pool.
    /// Output order is (cell, repetition) regardless of scheduling.
    pub fn run_experiment(&self, cells: &[CellSpec], repetitions: usize) -> ExperimentOutput {
        let jobs: Vec<(&CellSpec, usize)> = cells
            .iter()
            .flat_map(|c| (0..repetitions).map(move |r| (c, r)))
            .collect();
        let outcomes: Vec<Result<RunRecord, RunFailure>> = jobs
            .par_iter()
            .map(|(c, r)| {
                self.run_one(c, *r).map_err(|error| RunFailure {
                    cell: c.index,
                    rep: *r,
                    error,
                })
            })
            .collect();
        let mut out = ExperimentOutput::default();
        for o in outcomes {
            match o {
                Ok(r) => out.records.push(r),
                Err(f) if f.error == RunError::Cancelled => out.truncated = true,
                Err(f) => out.failures.push(f),
            }
        }
        out
    }
}

fn agents(ideals: &[Point], sigma: f64) -> Vec<Agent> {
    ideals
        .iter()
        .enumerate()
        .map(|(id, p)| Agent {
            id,
            ideal: p.clone(),
            sigma,
        })
        .collect()
}

/// Metric, ideal points, status quo and proposal script of a table fixture.
pub fn table_instance(
    t: &TableFixture,
) -> Result<(TableMetric, Vec<Point>, Point, Vec<Proposal>), String> {
    let mut m = TableMetric::new(t.labels.clone());
    for e in &t.distances {
        m.set(&e.0, &e.1, e.2).map_err(|e| e.to_string())?;
    }
    let pt = |l: &str| m.point(l).map_err(|e| e.to_string());
    let ideals = t.ideals.iter().map(|l| pt(l)).collect::<Result<Vec<_>, _>>()?;
    let status_quo = pt(&t.status_quo)?;
    let proposals = t
        .proposals
        .iter()
        .map(|p| {
            Ok(Proposal {
                first: p.first,
                second: p.second,
                point: pt(&p.point)?,
                text: Some(p.point.clone()),
                provenance: Provenance::default(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok((m, ideals, status_quo, proposals))
}

#[derive(Debug, Default)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    /// Some runs were skipped after an interrupt.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub cell: usize,
    pub rep: usize,
    pub seed: u64,
    pub space: Space,
    pub n: usize,
    pub g: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub discipline: bool,
    pub noisy_init: bool,
    pub mediator_option: u8,
    pub iterations: usize,
    pub converged: bool,
    pub winner_size: Option<usize>,
    pub quality: Option<f64>,
}

impl From<&RunRecord> for RunRow {
    fn from(r: &RunRecord) -> Self {
        RunRow {
            cell: r.cell.index,
            rep: r.rep,
            seed: r.seed,
            space: r.cell.space,
            n: r.cell.n,
            g: r.cell.g,
            alpha: r.cell.alpha,
            sigma: r.cell.sigma,
            discipline: r.cell.discipline,
            noisy_init: r.cell.noisy_init,
            mediator_option: r.cell.mediator_option.number(),
            iterations: r.iterations,
            converged: r.converged,
            winner_size: r.winner_size,
            quality: r.quality,
        }
    }
}

pub const RUN_HEADER: &[&str] = &[
    "cell", "rep", "seed", "space", "n", "g", "alpha", "sigma", "discipline", "noisy_init",
    "mediator_option", "iterations", "converged", "winner_size", "quality",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub space: Space,
    pub n: usize,
    pub g: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub discipline: bool,
    pub noisy_init: bool,
    pub mediator_option: u8,
    pub repetitions: usize,
    /// Non-converged runs count as the iteration cap.
    pub mean_iterations: f64,
    pub std_iterations: f64,
    pub convergence_rate: f64,
    /// Over converged runs only.
    pub mean_quality: Option<f64>,
    pub std_quality: Option<f64>,
}

pub const SUMMARY_HEADER: &[&str] = &[
    "cell", "space", "n", "g", "alpha", "sigma", "discipline", "noisy_init", "mediator_option",
    "repetitions", "mean_iterations", "std_iterations", "convergence_rate", "mean_quality",
    "std_quality",
];

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

pub fn summarize(cells: &[CellSpec], records: &[RunRecord], cap: usize) -> Vec<SummaryRow> {
    cells
        .iter()
        .filter_map(|c| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.cell.index == c.index).collect();
            if rs.is_empty() {
                return None;
            }
            let iters: Vec<f64> = rs
                .iter()
                .map(|r| if r.converged { r.iterations } else { r.iterations.max(cap) } as f64)
                .collect();
            let (mean_iterations, std_iterations) = mean_std(&iters);
            let qs: Vec<f64> = rs.iter().filter_map(|r| r.quality).collect();
            let (mean_quality, std_quality) = if qs.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&qs);
                (Some(m), Some(s))
            };
            Some(SummaryRow {
                cell: c.index,
                space: c.space,
                n: c.n,
                g: c.g,
                alpha: c.alpha,
                sigma: c.sigma,
                discipline: c.discipline,
                noisy_init: c.noisy_init,
                mediator_option: c.mediator_option.number(),
                repetitions: rs.len(),
                mean_iterations,
                std_iterations,
                convergence_rate: rs.iter().filter(|r| r.converged).count() as f64 / rs.len() as f64,
                mean_quality,
                std_quality,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub cell: CellSpec,
    pub seeds: Vec<u64>,
}

/// Enough to repeat the sweep: the full config plus derived seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub provider: String,
    pub repetitions: usize,
    pub config: ExperimentConfig,
    pub cells: Vec<ManifestCell>,
    pub failures: Vec<String>,
    pub truncated: bool,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, provider: String, cells: &[CellSpec], out: &ExperimentOutput) -> Self {
        let repetitions = config.repetitions();
        Manifest {
            version: env!("CARGO_PKG_VERSION").into(),
            provider,
            repetitions,
            config: config.clone(),
            cells: cells
                .iter()
                .map(|c| ManifestCell {
                    cell: c.clone(),
                    seeds: (0..repetitions)
                        .map(|r| child_seed(config.seed, c.index as u64, r as u64))
                        .collect(),
                })
                .collect(),
            failures: out.failures.iter().map(|f| f.to_string()).collect(),
            truncated: out.truncated,
        }
    }
}

pub const TRUNCATION_MARKER: &str = "# truncated\n";

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T], truncated: bool) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let mut f = w.into_inner().map_err(|e| e.into_error())?;
    if truncated {
        f.write_all(TRUNCATION_MARKER.as_bytes())?;
    }
    f.flush()
}

/// Writes `runs.csv`, `summary.csv` and `manifest.json` into `dir`.
pub fn write_results(
    dir: &Path,
    runs: &[RunRow],
    summaries: &[SummaryRow],
    manifest: &Manifest,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("runs.csv"), RUN_HEADER, runs, manifest.truncated)?;
    write_csv(&dir.join("summary.csv"), SUMMARY_HEADER, summaries, manifest.truncated)?;
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)
}

/// One transition per line.
pub fn write_trajectory(path: &Path, records: &[TransitionRecord]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRow>, csv::Error> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    r.deserialize().collect()
}
