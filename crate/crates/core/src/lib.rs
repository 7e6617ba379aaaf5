//! Distributional forecast reconciliation for hierarchies of discrete
//! count-valued time series.

pub mod base_models;
pub mod baselines;
pub mod dist;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod hierarchy;
pub mod io;
pub mod optim;
pub mod qp;
pub mod recon;
pub mod simulation;
pub mod stepwise;

pub use error::{Error, ErrorClass, Result};
