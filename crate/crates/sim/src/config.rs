//! The experiment document: one JSON object naming every parameter.
//!
//! Grid entries accept a scalar or a list; cells are the cartesian product
//! in the order `n, alpha, sigma, discipline, noisy_init, g,
//! mediator_option`, the last varying fastest.

use std::path::PathBuf;

use coalition_core::dynamics::{HaltRule, QuorumRule, DEFAULT_ITERATION_CAP};
use coalition_core::mediator::CentroidMode;
use coalition_core::textual::{MediatorOption, TextualConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::providers::ProviderSettings;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    /// Points in the plane, l2 distance, closed-form compromise.
    #[serde(rename = "euclidean-2d")]
    Euclidean2d,
    /// Sentences embedded and compared with the sqrt-cosine distance.
    Textual,
    /// A hand-written distance table with scripted proposals.
    Table,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: DeserializeOwned,
{
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub alpha: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub sigma: Vec<f64>,
    /// Coalition discipline (C).
    #[serde(deserialize_with = "one_or_many")]
    pub discipline: Vec<bool>,
    /// Start from points near, not at, the ideal points (I).
    #[serde(deserialize_with = "one_or_many")]
    pub noisy_init: Vec<bool>,
    /// Mixture components of the ideal-point distribution; 0 is uniform.
    #[serde(deserialize_with = "one_or_many")]
    pub g: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub mediator_option: Vec<MediatorOption>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            n: vec![10],
            alpha: vec![0.0],
            sigma: vec![0.0],
            discipline: vec![false],
            noisy_init: vec![false],
            g: vec![0],
            mediator_option: vec![MediatorOption::Aggregate],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry(pub String, pub String, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedProposal {
    /// Coalition ids; the initial singletons are numbered by agent.
    pub first: usize,
    pub second: usize,
    /// Label of the compromise point.
    pub point: String,
}

/// A finite metric given by its distance table, for worked examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableFixture {
    pub labels: Vec<String>,
    pub distances: Vec<TableEntry>,
    /// Ideal-point label per agent; agents start at their ideals.
    pub ideals: Vec<String>,
    pub status_quo: String,
    pub proposals: Vec<ScriptedProposal>,
    #[serde(default)]
    pub cycle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: Space,
    pub seed: u64,
    /// Defaults to 100 in the plane and 50 for sentences.
    pub repetitions: Option<usize>,
    pub iteration_cap: usize,
    /// Required yes-votes for a disciplined coalition to move.
    pub quorum: QuorumRule,
    pub halt: HaltRule,
    pub centroid: CentroidMode,
    pub grid: Grid,
    /// Base textual settings; `agent_count`, `mediator_option` and
    /// `noisy_init` are overridden per cell.
    pub textual: TextualConfig,
    /// Replacement prompt file with the layout of the bundled one.
    pub prompts: Option<PathBuf>,
    pub providers: ProviderSettings,
    pub table: Option<TableFixture>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            space: Space::Euclidean2d,
            seed: 0,
            repetitions: None,
            iteration_cap: DEFAULT_ITERATION_CAP,
            quorum: QuorumRule::CoalitionMajority,
            halt: HaltRule::StrictMajority,
            centroid: CentroidMode::WeightedMean,
            grid: Grid::default(),
            textual: TextualConfig::default(),
            prompts: None,
            providers: ProviderSettings::default(),
            table: None,
        }
    }
}

/// One parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub index: usize,
    pub space: Space,
    pub n: usize,
    pub g: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub discipline: bool,
    pub noisy_init: bool,
    pub mediator_option: MediatorOption,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&s)
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions.unwrap_or(match self.space {
            Space::Textual => 50,
            _ => 100,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        let g = &self.grid;
        if g.n.is_empty()
            || g.alpha.is_empty()
            || g.sigma.is_empty()
            || g.discipline.is_empty()
            || g.noisy_init.is_empty()
            || g.g.is_empty()
            || g.mediator_option.is_empty()
        {
            return bad("every grid entry needs at least one value");
        }
        if g.n.contains(&0) {
            return bad("n must be >= 1");
        }
        if g.alpha.iter().any(|a| !a.is_finite()) {
            return bad("alpha must be finite");
        }
        if g.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("sigma must be finite and >= 0");
        }
        if self.repetitions == Some(0) {
            return bad("repetitions must be >= 1");
        }
        if self.space == Space::Table && self.table.is_none() {
            return bad("space \"table\" needs a \"table\" section");
        }
        if self.space == Space::Textual && self.providers.mock.dimension == 0 {
            return bad("providers.mock.dimension must be >= 1");
        }
        self.textual
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellSpec> {
        let g = &self.grid;
        let ns: Vec<usize> = match (&self.space, &self.table) {
            (Space::Table, Some(t)) => vec![t.ideals.len()],
            _ => g.n.clone(),
        };
        let mut out = Vec::new();
        for &n in &ns {
            for &alpha in &g.alpha {
                for &sigma in &g.sigma {
                    for &discipline in &g.discipline {
                        for &noisy_init in &g.noisy_init {
                            for &mix in &g.g {
                                for &mediator_option in &g.mediator_option {
                                    out.push(CellSpec {
                                        index: out.len(),
                                        space: self.space,
                                        n,
                                        g: mix,
                                        alpha,
                                        sigma,
                                        discipline,
                                        noisy_init,
                                        mediator_option,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
