#![no_std]

//! Mediator-driven coalition formation over metric spaces.
//!
//! Agents hold ideal points in a metric space and start in singleton
//! coalitions. Each iteration a mediator picks two coalitions and proposes a
//! compromise point; members vote against a fixed status quo, a constitution
//! decides who moves, and the process halts once some coalition holds a
//! majority of the agents.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! network or processes lives in the `coalition-sim` companion crate, which
//! plugs language-model and embedding backends in through the
//! [`textual::Generator`] and [`textual::Embedder`] traits.
//!
//! ```txt
//!   metric      points, distances, weighted mean, geometric median
//!   dynamics    agents, votes, constitutions, transitions, run loop
//!   mediator    centroid, alpha scoring, pair selection, compromise
//!   textual     prompts, numbered-list parsing, candidate argmin
//!   instance    status quo / ideal point / noise sampling, quality
//! ```

extern crate alloc;

pub mod dynamics;
pub mod instance;
pub mod mediator;
pub mod metric;
pub mod provider;
pub mod seed;
pub mod textual;

pub use dynamics::{
    Agent, Coalition, CoalitionStructure, HaltRule, Mediator, ProcessConfig, ProcessError,
    Proposal, Provenance, QuorumRule, RunOptions, RunResult, TransitionRecord,
};
pub use mediator::{AiMediator, CentroidMode, CompromiseMode, MediatorConfig, ScoreBreakdown};
pub use metric::{Distance, Metric, MetricError, MetricKind, Point, TableMetric};
pub use provider::{ChatRequest, ProviderError, ProviderErrorKind, Task};
