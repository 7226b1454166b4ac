//! Desk-scale reinforcement-learning toolkit for finite-horizon
//! demand-response scheduling with terminal storage constraints.
//!
//! The crate bundles a deterministic surrogate plant ([`env`]), a small
//! hand-rolled function approximator with exact gradients and Adam ([`nn`]),
//! a DDPG agent ([`ddpg`]), a goal-space planning layer that shapes rewards
//! through a pruned goal-transition DAG ([`gsp`]), the multi-seed training
//! harness ([`harness`]), and run analysis plus a CLI front end
//! ([`analysis`], [`cli`]).

pub mod analysis;
pub mod cli;
pub mod config;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod gsp;
pub mod harness;
pub mod nn;

pub use error::{Error, Result};
