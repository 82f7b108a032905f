//! The coalition-formation state machine.
//!
//! State is a [`CoalitionStructure`], a partition of the agents into
//! coalitions each gathered around a point. One iteration asks the mediator
//! for a [`Proposal`], collects votes from the members of both named
//! coalitions, lets the constitution decide who moves, and applies the
//! transition
//!
//! ```txt
//!   D' = D \ {d_i, d_j}  U  {d_i', d_j', d_p}
//! ```
//!
//! dropping whichever of the three came out empty.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mediator::{MediatorError, ScoreBreakdown};
use crate::metric::{Distance, MetricError, Point};
use crate::textual::CandidateSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: usize,
    pub ideal: Point,
    /// Altruism width, in the units of the space's distance. Zero means the
    /// agent votes deterministically.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coalition {
    pub id: usize,
    /// Agent ids, ascending.
    pub members: Vec<usize>,
    pub point: Point,
    /// The sentence behind `point` in textual runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Coalition {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// A partition of agents `0..agent_count` into nonempty coalitions, kept
/// sorted by coalition id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionStructure {
    coalitions: Vec<Coalition>,
    agent_count: usize,
    next_id: usize,
}

impl CoalitionStructure {
    /// One singleton coalition per agent; coalition `i` holds agent `i` at
    /// `starts[i]`.
    pub fn singletons(starts: Vec<(Point, Option<String>)>) -> Self {
        let agent_count = starts.len();
        let coalitions = starts
            .into_iter()
            .enumerate()
            .map(|(i, (point, text))| Coalition {
                id: i,
                members: alloc::vec![i],
                point,
                text,
            })
            .collect();
        CoalitionStructure {
            coalitions,
            agent_count,
            next_id: agent_count,
        }
    }

    /// Builds a structure from explicit coalitions, checking the partition
    /// invariant.
    pub fn from_coalitions(
        mut coalitions: Vec<Coalition>,
        agent_count: usize,
    ) -> Result<Self, ProcessError> {
        coalitions.sort_by_key(|c| c.id);
        for c in &mut coalitions {
            c.members.sort_unstable();
        }
        let next_id = coalitions.last().map_or(0, |c| c.id + 1);
        let s = CoalitionStructure {
            coalitions,
            agent_count,
            next_id,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Coalition> {
        self.coalitions
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.coalitions[i])
    }

    /// Checks that coalitions are nonempty, pairwise disjoint and cover
    /// every agent, with ids strictly increasing.
    pub fn validate(&self) -> Result<(), ProcessError> {
        let n = self.agent_count;
        if self.coalitions.is_empty() || self.coalitions.len() > n {
            return Err(ProcessError::BrokenPartition("coalition count out of range"));
        }
        let mut seen = alloc::vec![false; n];
        let mut last_id = None;
        for c in &self.coalitions {
            if last_id.is_some_and(|l| c.id <= l) {
                return Err(ProcessError::BrokenPartition("coalition ids not increasing"));
            }
            last_id = Some(c.id);
            if c.members.is_empty() {
                return Err(ProcessError::BrokenPartition("empty coalition"));
            }
            for &m in &c.members {
                if m >= n || seen[m] {
                    return Err(ProcessError::BrokenPartition("agent missing or repeated"));
                }
                seen[m] = true;
            }
        }
        if seen.iter().all(|s| *s) {
            Ok(())
        } else {
            Err(ProcessError::BrokenPartition("agent missing or repeated"))
        }
    }
}

/// Vote threshold a disciplined coalition must reach before anyone moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuorumRule {
    None,
    /// Strictly more than half of the coalition.
    CoalitionMajority,
    Unanimous,
    Count(usize),
    /// At least `ceil(q * |C|)` approvals.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaltRule {
    /// `2 |C| > n`.
    StrictMajority,
    /// `|C| >= ceil(q * n)`.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub status_quo: Point,
    pub halt: HaltRule,
    pub discipline: bool,
    /// Only consulted when `discipline` is on.
    pub quorum: QuorumRule,
    pub iteration_cap: usize,
    pub rng_seed: u64,
}

pub const DEFAULT_ITERATION_CAP: usize = 10_000;

impl ProcessConfig {
    pub fn new(status_quo: Point, rng_seed: u64) -> Self {
        ProcessConfig {
            status_quo,
            halt: HaltRule::StrictMajority,
            discipline: false,
            quorum: QuorumRule::CoalitionMajority,
            iteration_cap: DEFAULT_ITERATION_CAP,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        if let HaltRule::Fraction(q) = self.halt {
            if !(q > 0.0 && q <= 1.0) {
                return Err(ProcessError::InvalidConfig("halt fraction must lie in (0, 1]"));
            }
        }
        if let QuorumRule::Fraction(q) = self.quorum {
            if !(0.0..=1.0).contains(&q) {
                return Err(ProcessError::InvalidConfig("quorum fraction must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Approvals a coalition of `size` members needs before its yes-voters
    /// may leave.
    pub fn quorum_threshold(&self, size: usize) -> usize {
        if !self.discipline {
            return 0;
        }
        match self.quorum {
            QuorumRule::None => 0,
            QuorumRule::CoalitionMajority => size / 2 + 1,
            QuorumRule::Unanimous => size,
            QuorumRule::Count(q) => q,
            QuorumRule::Fraction(q) => libm::ceil(q * size as f64) as usize,
        }
    }
}

/// What a mediator attaches to a proposal so runs can be audited later.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<CandidateSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub first: usize,
    pub second: usize,
    pub point: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub agent: usize,
    pub approve: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub iteration: usize,
    pub proposal: Proposal,
    pub votes: Vec<Vote>,
    pub movers: Vec<usize>,
    pub structure: CoalitionStructure,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProcessError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("mediator failed at iteration {iteration}: {source}")]
    Mediator {
        iteration: usize,
        source: MediatorError,
    },
    #[error("invalid proposal: {0}")]
    InvalidProposal(&'static str),
    #[error("no live coalition with id {0}")]
    UnknownCoalition(usize),
    #[error("votes do not match the coalition's members")]
    VoteMismatch,
    #[error("broken partition: {0}")]
    BrokenPartition(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("agents must have ids 0..n in order with sigma >= 0")]
    BadAgents,
}

/// Approves iff the proposal is strictly closer to the ideal than the
/// status quo.
pub fn deterministic_vote<D: Distance + ?Sized>(
    agent: &Agent,
    p: &Point,
    cfg: &ProcessConfig,
    metric: &D,
) -> Result<bool, MetricError> {
    Ok(metric.dist(&agent.ideal, p)? < metric.dist(&agent.ideal, &cfg.status_quo)?)
}

/// Half-Gaussian approval probability from the two distances.
///
/// Returns 1 when the proposal is no farther than the status quo. Beyond
/// that it is the half-normal density `2/(sigma sqrt(2 pi)) exp(-d_p^2 /
/// (2 sigma^2))` evaluated at the proposal distance, capped at 1.
///
/// With `sigma == 0` this is the deterministic rule, strict inequality
/// included, so an exact tie is a rejection.
pub fn approval_from_distances(to_proposal: f64, to_status_quo: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if to_proposal < to_status_quo { 1.0 } else { 0.0 };
    }
    if to_status_quo >= to_proposal {
        return 1.0;
    }
    let density = 2.0 / (sigma * libm::sqrt(2.0 * core::f64::consts::PI))
        * libm::exp(-(to_proposal * to_proposal) / (2.0 * sigma * sigma));
    density.min(1.0)
}

pub fn approval_probability<D: Distance + ?Sized>(
    agent: &Agent,
    p: &Point,
    cfg: &ProcessConfig,
    metric: &D,
) -> Result<f64, MetricError> {
    let to_p = metric.dist(&agent.ideal, p)?;
    let to_r = metric.dist(&agent.ideal, &cfg.status_quo)?;
    Ok(approval_from_distances(to_p, to_r, agent.sigma))
}

/// Bernoulli draw with the approval probability. Degenerate probabilities
/// (0 or 1) consume no randomness, so with `sigma == 0` this is exactly the
/// deterministic vote.
pub fn sample_vote<D: Distance + ?Sized, R: RngCore + ?Sized>(
    agent: &Agent,
    p: &Point,
    cfg: &ProcessConfig,
    metric: &D,
    rng: &mut R,
) -> Result<bool, MetricError> {
    let f = approval_probability(agent, p, cfg, metric)?;
    Ok(bernoulli(f, rng))
}

fn bernoulli<R: RngCore + ?Sized>(f: f64, rng: &mut R) -> bool {
    if f >= 1.0 {
        true
    } else if f <= 0.0 {
        false
    } else {
        rng.random::<f64>() < f
    }
}

/// Decides who leaves `coalition` for the proposed point. `votes` must hold
/// exactly one entry per member.
pub fn apply_constitution(
    coalition: &Coalition,
    votes: &[Vote],
    cfg: &ProcessConfig,
) -> Result<Vec<usize>, ProcessError> {
    if votes.len() != coalition.members.len()
        || votes
            .iter()
            .any(|v| coalition.members.binary_search(&v.agent).is_err())
    {
        return Err(ProcessError::VoteMismatch);
    }
    let mut yes: Vec<usize> = votes.iter().filter(|v| v.approve).map(|v| v.agent).collect();
    yes.sort_unstable();
    yes.dedup();
    if yes.len() != votes.iter().filter(|v| v.approve).count() {
        return Err(ProcessError::VoteMismatch);
    }
    if yes.len() >= cfg.quorum_threshold(coalition.size()) {
        Ok(yes)
    } else {
        Ok(Vec::new())
    }
}

/// Moves `movers_first` and `movers_second` into a fresh coalition around
/// the proposal's point; everyone else keeps their coalition and its point.
pub fn apply_transition(
    structure: &CoalitionStructure,
    proposal: &Proposal,
    movers_first: &[usize],
    movers_second: &[usize],
) -> Result<CoalitionStructure, ProcessError> {
    if proposal.first == proposal.second {
        return Err(ProcessError::InvalidProposal("a coalition cannot merge with itself"));
    }
    let first = structure
        .get(proposal.first)
        .ok_or(ProcessError::UnknownCoalition(proposal.first))?;
    let second = structure
        .get(proposal.second)
        .ok_or(ProcessError::UnknownCoalition(proposal.second))?;
    for (c, movers) in [(first, movers_first), (second, movers_second)] {
        if movers.iter().any(|m| c.members.binary_search(m).is_err()) {
            return Err(ProcessError::InvalidProposal("mover is not a member"));
        }
    }

    let mut next = structure.clone();
    let mut joined: Vec<usize> = movers_first.iter().chain(movers_second).copied().collect();
    joined.sort_unstable();
    joined.dedup();
    if joined.is_empty() {
        return Ok(next);
    }
    for c in &mut next.coalitions {
        if c.id == proposal.first || c.id == proposal.second {
            c.members.retain(|m| joined.binary_search(m).is_err());
        }
    }
    next.coalitions.retain(|c| !c.members.is_empty());
    next.coalitions.push(Coalition {
        id: next.next_id,
        members: joined,
        point: proposal.point.clone(),
        text: proposal.text.clone(),
    });
    next.next_id += 1;
    Ok(next)
}

/// Lowest-id coalition satisfying the halting rule, if any.
pub fn check_halt(structure: &CoalitionStructure, cfg: &ProcessConfig) -> Option<usize> {
    let n = structure.agent_count();
    let needed = |size: usize| match cfg.halt {
        HaltRule::StrictMajority => 2 * size > n,
        HaltRule::Fraction(q) => size >= libm::ceil(q * n as f64) as usize,
    };
    structure
        .coalitions()
        .iter()
        .find(|c| needed(c.size()))
        .map(|c| c.id)
}

/// Picks two coalitions and a compromise point for them.
pub trait Mediator {
    fn propose(
        &mut self,
        structure: &CoalitionStructure,
        metric: &dyn Distance,
        rng: &mut dyn RngCore,
    ) -> Result<Proposal, MediatorError>;
}

impl<M: Mediator + ?Sized> Mediator for &mut M {
    fn propose(
        &mut self,
        structure: &CoalitionStructure,
        metric: &dyn Distance,
        rng: &mut dyn RngCore,
    ) -> Result<Proposal, MediatorError> {
        (**self).propose(structure, metric, rng)
    }
}

/// Replays a fixed list of proposals, then fails.
#[derive(Debug, Clone, Default)]
pub struct ScriptedMediator {
    queue: VecDeque<Proposal>,
    cycle: bool,
}

impl ScriptedMediator {
    pub fn new(proposals: Vec<Proposal>) -> Self {
        ScriptedMediator {
            queue: proposals.into(),
            cycle: false,
        }
    }

    /// Repeats the script forever instead of running dry.
    pub fn cycling(proposals: Vec<Proposal>) -> Self {
        ScriptedMediator {
            queue: proposals.into(),
            cycle: true,
        }
    }
}

impl Mediator for ScriptedMediator {
    fn propose(
        &mut self,
        _structure: &CoalitionStructure,
        _metric: &dyn Distance,
        _rng: &mut dyn RngCore,
    ) -> Result<Proposal, MediatorError> {
        let p = self.queue.pop_front().ok_or(MediatorError::ScriptExhausted)?;
        if self.cycle {
            self.queue.push_back(p.clone());
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub keep_trajectory: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            keep_trajectory: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub iterations: usize,
    pub converged: bool,
    pub winner: Option<Coalition>,
    pub final_structure: CoalitionStructure,
    pub trajectory: Vec<TransitionRecord>,
}

fn check_agents(agents: &[Agent]) -> Result<(), ProcessError> {
    let ok = !agents.is_empty()
        && agents
            .iter()
            .enumerate()
            .all(|(i, a)| a.id == i && a.sigma >= 0.0 && a.sigma.is_finite());
    if ok {
        Ok(())
    } else {
        Err(ProcessError::BadAgents)
    }
}

/// Runs the process from `initial` until some coalition satisfies the
/// halting rule or `cfg.iteration_cap` proposals have been made.
///
/// All randomness comes from one ChaCha8 stream seeded with
/// `cfg.rng_seed`: first whatever the mediator draws, then one uniform per
/// vote whose approval probability lies strictly between 0 and 1, in
/// ascending agent-id order over both coalitions.
pub fn run_process<D, M>(
    agents: &[Agent],
    initial: CoalitionStructure,
    cfg: &ProcessConfig,
    metric: &D,
    mediator: &mut M,
    opts: RunOptions,
) -> Result<RunResult, ProcessError>
where
    D: Distance,
    M: Mediator + ?Sized,
{
    check_agents(agents)?;
    cfg.validate()?;
    if initial.agent_count() != agents.len() {
        return Err(ProcessError::BrokenPartition("structure and agents disagree on n"));
    }
    initial.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut structure = initial;
    let mut trajectory = Vec::new();
    let mut iteration = 0;
    loop {
        if let Some(w) = check_halt(&structure, cfg) {
            return Ok(RunResult {
                iterations: iteration,
                converged: true,
                winner: structure.get(w).cloned(),
                final_structure: structure,
                trajectory,
            });
        }
        if iteration >= cfg.iteration_cap {
            return Ok(RunResult {
                iterations: iteration,
                converged: false,
                winner: None,
                final_structure: structure,
                trajectory,
            });
        }
        iteration += 1;

        let proposal = mediator
            .propose(&structure, metric, &mut rng)
            .map_err(|source| ProcessError::Mediator { iteration, source })?;
        let first = structure
            .get(proposal.first)
            .ok_or(ProcessError::UnknownCoalition(proposal.first))?;
        let second = structure
            .get(proposal.second)
            .ok_or(ProcessError::UnknownCoalition(proposal.second))?;
        if first.id == second.id {
            return Err(ProcessError::InvalidProposal("a coalition cannot merge with itself"));
        }

        let mut voters: Vec<usize> = first.members.iter().chain(&second.members).copied().collect();
        voters.sort_unstable();
        let mut votes = Vec::with_capacity(voters.len());
        for a in voters {
            let approve = sample_vote(&agents[a], &proposal.point, cfg, metric, &mut rng)?;
            votes.push(Vote { agent: a, approve });
        }
        let split = |c: &Coalition| -> Vec<Vote> {
            votes
                .iter()
                .filter(|v| c.members.binary_search(&v.agent).is_ok())
                .copied()
                .collect()
        };
        let movers_first = apply_constitution(first, &split(first), cfg)?;
        let movers_second = apply_constitution(second, &split(second), cfg)?;
        let next = apply_transition(&structure, &proposal, &movers_first, &movers_second)?;

        if opts.keep_trajectory {
            let mut movers: Vec<usize> = movers_first.iter().chain(&movers_second).copied().collect();
            movers.sort_unstable();
            trajectory.push(TransitionRecord {
                iteration,
                proposal,
                votes,
                movers,
                structure: next.clone(),
            });
        }
        structure = next;
    }
}
