//! The n-first and sensitivity scenarios, trial simulation and report output.
//!
//! Every random task draws its seed from the master seed and its own
//! coordinates, and results are gathered in index order, so reports do not
//! depend on the number of worker threads.

mod n_first;
mod report;
mod sensitivity;
mod simulate;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TrainingData;
use crate::error::{Error, Result};
use crate::estimators::augmented_control;
use crate::fidelity::pearson;
use crate::generators::{GeneratorKind, GeneratorModel, HyperParams};
use crate::tuning::HyperGrid;

pub use n_first::{run_n_first, NFirstReport, ReplicateRow};
pub use report::{write_csv_rows, write_json};
pub use sensitivity::{run_sensitivity, DecisionCounts, Histogram, SensitivityReport, SetRow};
pub use simulate::{simulate_trial, CategoricalCovariate, SimSpec};

/// Number of `τ̂_av` histogram bins in sensitivity reports.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    #[serde(default)]
    pub hyperparams: HyperParams,
    /// When present, hyperparameters are chosen by cross-validated grid
    /// search and `hyperparams` is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningConfig>,
}

impl GeneratorConfig {
    pub fn new(kind: GeneratorKind) -> Self {
        Self {
            kind,
            hyperparams: HyperParams::new(),
            tuning: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub grid: HyperGrid,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_sets")]
    pub num_sets: usize,
}

fn default_folds() -> usize {
    5
}

fn default_sets() -> usize {
    3
}

/// Pearson correlation between training-set effects and augmented effects.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "correlation of vectors of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least 2 points".into()));
    }
    pearson(x, y).ok_or_else(|| Error::InvalidArgument("correlation of a constant vector".into()))
}

/// `|τ̂ − τ̄| / |τ̄| · 100`, undefined when `τ̄ = 0`.
pub fn relative_difference(tau: f64, tau_bar: f64) -> Option<f64> {
    (tau_bar != 0.0).then(|| (tau - tau_bar).abs() / tau_bar.abs() * 100.0)
}

/// Control mean and variance for `l` completed arms, in replicate order.
fn replicate_moments(
    model: &GeneratorModel,
    train: &TrainingData,
    m0: usize,
    l: usize,
    seed_of: impl Fn(usize) -> u64 + Sync,
) -> Result<Vec<(f64, f64)>> {
    let train_y = train.outcomes()?;
    let s = m0 - train.n();
    (0..l)
        .into_par_iter()
        .map(|j| augmented_control(&train_y, &model.sample_outcomes(s, seed_of(j))?, m0))
        .collect()
}

fn check_l(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::InvalidArgument("l must be at least 1".into()));
    }
    Ok(())
}
