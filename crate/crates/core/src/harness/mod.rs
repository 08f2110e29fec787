//! Plumbing around the planner: files, synthetic data, metrics, plots.

pub mod config;
pub mod io;
pub mod metrics;
pub mod plot;
pub mod synthetic;
