//! Simulation engine for trials whose control arm is completed with
//! generated virtual patients.
//!
//! The crate covers the whole pipeline: loading and preparing trial data,
//! fitting tabular generators on a subset of control patients, estimating the
//! treatment effect on the completed trial (one-shot and averaged), labelling
//! the resulting decisions against the original trial, fidelity scoring,
//! cross-validated tuning, and the two experiment scenarios.

pub mod data;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod fidelity;
pub mod generators;
pub mod seed;
pub mod tuning;

pub use error::{Error, ExternalError, Result};
