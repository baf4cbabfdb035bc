use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Cell, ColumnSpec, PatientRecord, Schema, TrialDataset};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalCovariate {
    pub name: String,
    pub categories: Vec<String>,
    /// Uniform over the categories when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

/// A two-arm trial with independent covariates and Bernoulli outcomes.
///
/// The control event probability moves linearly from `p_control_start` at the
/// first enrolled patient to `p_control_start + drift` at the last one; the
/// treated probability is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub m0: usize,
    pub m1: usize,
    pub p_treated: f64,
    pub p_control_start: f64,
    #[serde(default)]
    pub drift: f64,
    /// Standard-normal covariates named `x1`, `x2`, ...
    #[serde(default)]
    pub numeric_covariates: usize,
    #[serde(default)]
    pub categorical_covariates: Vec<CategoricalCovariate>,
    #[serde(default)]
    pub seed: u64,
}

fn probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m0 == 0 || self.m1 == 0 {
            return Err(Error::InvalidArgument("both arms need at least one patient".into()));
        }
        probability("p_treated", self.p_treated)?;
        probability("p_control_start", self.p_control_start)?;
        probability("p_control_start + drift", self.p_control_start + self.drift)?;
        for c in &self.categorical_covariates {
            if c.categories.is_empty() {
                return Err(Error::InvalidArgument(format!("`{}` has no categories", c.name)));
            }
            if let Some(p) = &c.probabilities {
                if p.len() != c.categories.len() || p.iter().any(|w| w.is_nan() || *w < 0.0) || p.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "`{}` needs one non-negative weight per category",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<Schema> {
        let mut columns: Vec<ColumnSpec> = (1..=self.numeric_covariates)
            .map(|i| ColumnSpec::numeric(format!("x{i}")))
            .collect();
        for c in &self.categorical_covariates {
            columns.push(ColumnSpec::categorical(c.name.clone(), c.categories.iter().cloned()));
        }
        columns.push(ColumnSpec::outcome("outcome"));
        columns.push(ColumnSpec::arm("arm"));
        columns.push(ColumnSpec::enrolment_order("enrolment"));
        Schema::new(columns)
    }

    /// Control event probability of the patient at enrolment rank `rank`.
    pub fn control_probability(&self, rank: usize) -> f64 {
        let m = self.m0 + self.m1;
        let t = if m > 1 { rank as f64 / (m - 1) as f64 } else { 0.0 };
        (self.p_control_start + self.drift * t).clamp(0.0, 1.0)
    }
}

/// Arms are a uniform random permutation of `m0` zeros and `m1` ones over
/// the enrolment order.
pub fn simulate_trial(spec: &SimSpec) -> Result<TrialDataset> {
    spec.validate()?;
    let schema = Arc::new(spec.schema()?);
    let mut rng = rng_from_seed(derive_seed(spec.seed, &[stream::SIMULATION]));
    let mut arms: Vec<u8> = std::iter::repeat_n(0, spec.m0)
        .chain(std::iter::repeat_n(1, spec.m1))
        .collect();
    arms.shuffle(&mut rng);
    let weights = spec
        .categorical_covariates
        .iter()
        .map(|c| {
            let w = c.probabilities.clone().unwrap_or_else(|| vec![1.0; c.categories.len()]);
            WeightedIndex::new(w).map_err(|e| Error::InvalidArgument(format!("`{}`: {e}", c.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let records = arms
        .into_iter()
        .enumerate()
        .map(|(rank, arm)| {
            let mut covariates = Vec::with_capacity(spec.numeric_covariates + weights.len());
            for _ in 0..spec.numeric_covariates {
                covariates.push(Cell::Num(StandardNormal.sample(&mut rng)));
            }
            for w in &weights {
                covariates.push(Cell::Cat(w.sample(&mut rng) as u32));
            }
            let p = if arm == 1 { spec.p_treated } else { spec.control_probability(rank) };
            PatientRecord {
                covariates,
                outcome: Some(u8::from(rng.random_bool(p))),
                arm,
                enrolment: rank as f64,
                enrolment_rank: rank,
            }
        })
        .collect();
    TrialDataset::new(schema, records)
}
