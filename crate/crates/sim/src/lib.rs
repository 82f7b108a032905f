//! Providers, experiment harness, statistics and the `coalition` CLI on top
//! of `coalition-core`.

pub mod cli;
pub mod config;
pub mod harness;
pub mod providers;
pub mod stats;
