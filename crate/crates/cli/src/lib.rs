//! Batch front end for the avalanche fragmentation–branching model.
//!
//! The binary is a thin wrapper around [`execute`]; everything it writes goes
//! through [`output`], so reruns with the same configuration and seed are
//! byte-identical for any worker count.

// `!(x > 0.0)` is how NaN gets rejected alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use frag_avalanche::model::ModelError;
use frag_avalanche::montecarlo::SimError;
use frag_avalanche::semigroup::SemigroupError;
use frag_avalanche::stats::StatsError;
use thiserror::Error;

pub use commands::{execute, Command, Outcome};
pub use config::{Overrides, RunConfig};

/// Version of every JSON artifact layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INVALID: i32 = 1;
    pub const ACCEPTANCE_FAILURE: i32 = 2;
}
