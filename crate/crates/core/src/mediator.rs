//! Mediators: centroid, alpha scoring, pair selection and compromise.
//!
//! A mediator first locates the size-weighted centroid of the coalition
//! points, scores each coalition by `S_i = exp(alpha * d'_i)` where `d'_i` is
//! its distance to the centroid divided by the largest such distance, draws
//! one coalition with probability `S_i / sum S`, and pairs it with the
//! coalition whose point is nearest. The compromise point for the pair comes
//! from a [`CompromiseSource`].

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Coalition, CoalitionStructure, Mediator, Proposal, Provenance};
use crate::metric::{
    geometric_median, weighted_mean, Distance, MetricError, Point, WEISZFELD_MAX_ITER,
    WEISZFELD_TOL,
};
use crate::textual::{CandidateSet, TextualError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MediatorError {
    #[error("need at least two coalitions to propose a merge")]
    TooFewCoalitions,
    #[error("alpha must lie in [-1, 1], got {0}")]
    BadAlpha(f64),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("compromise for coalitions {first} and {second}: {source}")]
    Textual {
        first: usize,
        second: usize,
        source: TextualError,
    },
    #[error("scripted mediator ran out of proposals")]
    ScriptExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentroidMode {
    WeightedMean,
    GeometricMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompromiseMode {
    /// Size-weighted average of the two coalition points.
    ClosedForm,
    /// Best of a generated candidate list, measured against the weighted
    /// average.
    CandidateArgmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediatorConfig {
    pub alpha: f64,
    pub centroid_mode: CentroidMode,
    pub compromise_mode: CompromiseMode,
}

impl MediatorConfig {
    pub fn new(alpha: f64) -> Self {
        MediatorConfig {
            alpha,
            centroid_mode: CentroidMode::WeightedMean,
            compromise_mode: CompromiseMode::ClosedForm,
        }
    }

    pub fn validate(&self) -> Result<(), MediatorError> {
        if (-1.0..=1.0).contains(&self.alpha) {
            Ok(())
        } else {
            Err(MediatorError::BadAlpha(self.alpha))
        }
    }
}

/// Everything the selection step computed, in coalition-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub centroid: Point,
    pub coalition_ids: Vec<usize>,
    pub raw_distances: Vec<f64>,
    pub normalized: Vec<f64>,
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
}

fn points_and_sizes(structure: &CoalitionStructure) -> (Vec<Point>, Vec<f64>) {
    structure
        .coalitions()
        .iter()
        .map(|c| (c.point.clone(), c.size() as f64))
        .unzip()
}

/// Size-weighted centroid of the coalition points.
pub fn compute_centroid(
    structure: &CoalitionStructure,
    cfg: &MediatorConfig,
) -> Result<Point, MetricError> {
    let (points, sizes) = points_and_sizes(structure);
    match cfg.centroid_mode {
        CentroidMode::WeightedMean => weighted_mean(&points, &sizes),
        CentroidMode::GeometricMedian => {
            geometric_median(&points, &sizes, WEISZFELD_TOL, WEISZFELD_MAX_ITER)
        }
    }
}

/// Normalized centroid distances, scores and selection probabilities. When
/// every coalition sits on the centroid all normalized distances are 0.
pub fn score_coalitions<D: Distance + ?Sized>(
    structure: &CoalitionStructure,
    centroid: &Point,
    cfg: &MediatorConfig,
    metric: &D,
) -> Result<ScoreBreakdown, MetricError> {
    let coalitions = structure.coalitions();
    let raw = coalitions
        .iter()
        .map(|c| metric.dist(&c.point, centroid))
        .collect::<Result<Vec<_>, _>>()?;
    let max = raw.iter().copied().fold(0.0, f64::max);
    let normalized: Vec<f64> = if max > 0.0 {
        raw.iter().map(|d| d / max).collect()
    } else {
        alloc::vec![0.0; raw.len()]
    };
    let scores: Vec<f64> = normalized
        .iter()
        .map(|d| libm::exp(cfg.alpha * d))
        .collect();
    let total: f64 = scores.iter().sum();
    let probabilities = scores.iter().map(|s| s / total).collect();
    Ok(ScoreBreakdown {
        centroid: centroid.clone(),
        coalition_ids: coalitions.iter().map(|c| c.id).collect(),
        raw_distances: raw,
        normalized,
        scores,
        probabilities,
    })
}

/// Draws the first coalition from the score probabilities (one uniform
/// draw) and pairs it with the nearest other coalition, lowest id on ties.
pub fn select_pair<D: Distance + ?Sized, R: RngCore + ?Sized>(
    structure: &CoalitionStructure,
    scores: &ScoreBreakdown,
    metric: &D,
    rng: &mut R,
) -> Result<(usize, usize), MediatorError> {
    let coalitions = structure.coalitions();
    if coalitions.len() < 2 {
        return Err(MediatorError::TooFewCoalitions);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = coalitions.len() - 1;
    for (i, p) in scores.probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            pick = i;
            break;
        }
    }
    let first = &coalitions[pick];
    let mut best: Option<(f64, usize)> = None;
    for c in coalitions.iter().filter(|c| c.id != first.id) {
        let d = metric.dist(&first.point, &c.point)?;
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c.id));
        }
    }
    Ok((first.id, best.expect("at least two coalitions").1))
}

/// `(|C_i| p_i + |C_j| p_j) / (|C_i| + |C_j|)`.
pub fn euclidean_compromise(
    size_i: usize,
    p_i: &Point,
    size_j: usize,
    p_j: &Point,
) -> Result<Point, MetricError> {
    weighted_mean(
        &[p_i.clone(), p_j.clone()],
        &[size_i as f64, size_j as f64],
    )
}

/// A compromise point with whatever the source wants to keep on record.
#[derive(Debug, Clone, PartialEq)]
pub struct Compromise {
    pub point: Point,
    pub text: Option<String>,
    pub candidates: Option<CandidateSet>,
}

/// Produces the compromise point for a chosen pair.
pub trait CompromiseSource {
    fn compromise(
        &mut self,
        first: &Coalition,
        second: &Coalition,
        metric: &dyn Distance,
    ) -> Result<Compromise, MediatorError>;
}

/// The weighted average of the two coalition points.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClosedForm;

impl CompromiseSource for ClosedForm {
    fn compromise(
        &mut self,
        first: &Coalition,
        second: &Coalition,
        _metric: &dyn Distance,
    ) -> Result<Compromise, MediatorError> {
        Ok(Compromise {
            point: euclidean_compromise(first.size(), &first.point, second.size(), &second.point)?,
            text: None,
            candidates: None,
        })
    }
}

/// Centroid scoring plus nearest-partner selection, with a pluggable
/// compromise source. Memoryless: a rejected pair can come straight back.
#[derive(Debug, Clone)]
pub struct AiMediator<S> {
    pub config: MediatorConfig,
    pub source: S,
}

impl<S: CompromiseSource> AiMediator<S> {
    pub fn new(config: MediatorConfig, source: S) -> Result<Self, MediatorError> {
        config.validate()?;
        Ok(AiMediator { config, source })
    }
}

impl<S: CompromiseSource> Mediator for AiMediator<S> {
    fn propose(
        &mut self,
        structure: &CoalitionStructure,
        metric: &dyn Distance,
        rng: &mut dyn RngCore,
    ) -> Result<Proposal, MediatorError> {
        if structure.len() < 2 {
            return Err(MediatorError::TooFewCoalitions);
        }
        let centroid = compute_centroid(structure, &self.config)?;
        let scores = score_coalitions(structure, &centroid, &self.config, metric)?;
        let (i, j) = select_pair(structure, &scores, metric, rng)?;
        let first = structure.get(i).expect("selected id is live");
        let second = structure.get(j).expect("selected id is live");
        let c = self.source.compromise(first, second, metric)?;
        Ok(Proposal {
            first: i,
            second: j,
            point: c.point,
            text: c.text,
            provenance: Provenance {
                scores: Some(scores),
                candidates: c.candidates,
            },
        })
    }
}
