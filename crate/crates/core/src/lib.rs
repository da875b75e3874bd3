//! Recommending fact-checking URLs to guardians with joint matrix factorization.

pub mod analytics;
pub mod baselines;
pub mod cli;
pub mod cooccurrence;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod seed;
pub mod similarity;
pub mod sparse;
pub mod text;

pub use error::{Error, Result};
