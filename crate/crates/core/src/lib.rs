//! Jointly learnable behavioral and trajectory planning.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::assign_op_pattern
)]

pub mod behavioral;
pub mod costing;
pub mod dynamics;
pub mod error;
pub mod frenet;
pub mod geometry;
pub mod harness;
pub mod learning;
pub mod optim;
pub mod planner;
pub mod sampler;
pub mod scalar;
pub mod trajectory_planner;
pub mod world;

pub use error::{PlanError, Result};
