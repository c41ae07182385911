//! Iterative Bayesian fusion of heterogeneous degradation data for remaining-useful-life prognostics.

pub mod config;
pub mod error;
pub mod fusion;
pub mod hsic;
pub mod mcmc;
pub mod models;
pub mod pipeline;
pub mod prob;
pub mod surrogate;

pub use error::{Error, Result};
