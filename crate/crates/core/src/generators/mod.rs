//! Tabular generators behind one fit/sample interface.
//!
//! A fitted [`GeneratorModel`] produces control-arm patients: arm is forced to
//! 0 and enrolment ranks continue after the last real patient. Sampling is a
//! pure function of `(model, s, seed)`.

mod bootstrap;
mod copula;
mod external;
mod marginals;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{PatientRecord, Schema, TrainingData};
use crate::error::{Error, Result};

pub use bootstrap::BootstrapModel;
pub use copula::{normal_cdf, normal_quantile, CopulaModel};
pub use external::{ExternalGenerator, ExternalModel};
pub use marginals::MarginalsModel;

pub type HyperParams = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Bootstrap,
    Marginals,
    Copula,
    External(ExternalGenerator),
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Bootstrap => "bootstrap",
            GeneratorKind::Marginals => "marginals",
            GeneratorKind::Copula => "copula",
            GeneratorKind::External(_) => "external",
        }
    }

    fn min_training_size(&self) -> usize {
        match self {
            GeneratorKind::Bootstrap | GeneratorKind::External(_) => 1,
            GeneratorKind::Marginals | GeneratorKind::Copula => 2,
        }
    }
}

#[derive(Debug, Clone)]
enum Params {
    Bootstrap(BootstrapModel),
    Marginals(MarginalsModel),
    Copula(CopulaModel),
    External(ExternalModel),
}

#[derive(Debug, Clone)]
pub struct GeneratorModel {
    schema: Arc<Schema>,
    rank_offset: usize,
    params: Params,
}

/// Generated control-arm patients.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch {
    pub schema: Arc<Schema>,
    pub records: Vec<PatientRecord>,
}

impl SyntheticBatch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn outcomes(&self) -> Vec<u8> {
        self.records
            .iter()
            .map(|r| r.outcome.expect("generated records carry an outcome"))
            .collect()
    }
}

pub fn fit(
    kind: &GeneratorKind,
    train: &TrainingData,
    hyperparams: &HyperParams,
    seed: u64,
) -> Result<GeneratorModel> {
    if train.n() < kind.min_training_size() {
        return Err(Error::InvalidArgument(format!(
            "{} generator needs at least {} training records, got {}",
            kind.name(),
            kind.min_training_size(),
            train.n()
        )));
    }
    train.require_complete()?;
    let params = match kind {
        GeneratorKind::Bootstrap => {
            reject_unknown("bootstrap", hyperparams, &[])?;
            Params::Bootstrap(BootstrapModel::fit(train))
        }
        GeneratorKind::Marginals => {
            reject_unknown("marginals", hyperparams, &["smoothing"])?;
            let alpha = number(hyperparams, "smoothing", 0.0)?;
            if alpha < 0.0 {
                return Err(Error::InvalidHyperparameter {
                    key: "smoothing".into(),
                    message: format!("{alpha} is negative"),
                });
            }
            Params::Marginals(MarginalsModel::fit(train, alpha))
        }
        GeneratorKind::Copula => {
            reject_unknown("copula", hyperparams, &["shrinkage"])?;
            let lambda = number(hyperparams, "shrinkage", copula::DEFAULT_SHRINKAGE)?;
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::InvalidHyperparameter {
                    key: "shrinkage".into(),
                    message: format!("{lambda} outside (0, 1]"),
                });
            }
            Params::Copula(CopulaModel::fit(train, lambda))
        }
        GeneratorKind::External(ext) => Params::External(ext.fit(train, hyperparams, seed)?),
    };
    Ok(GeneratorModel {
        schema: train.schema.clone(),
        rank_offset: train.rank_offset,
        params,
    })
}

fn reject_unknown(generator: &str, hp: &HyperParams, allowed: &[&str]) -> Result<()> {
    match hp.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(key) => Err(Error::UnknownHyperparameter {
            generator: generator.into(),
            key: key.clone(),
        }),
        None => Ok(()),
    }
}

fn number(hp: &HyperParams, key: &str, default: f64) -> Result<f64> {
    match hp.get(key) {
        None => Ok(default),
        Some(v) => v.as_f64().ok_or_else(|| Error::InvalidHyperparameter {
            key: key.into(),
            message: format!("expected a number, got {v}"),
        }),
    }
}

impl GeneratorModel {
    pub fn kind(&self) -> &'static str {
        match self.params {
            Params::Bootstrap(_) => "bootstrap",
            Params::Marginals(_) => "marginals",
            Params::Copula(_) => "copula",
            Params::External(_) => "external",
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// Dimension of the latent space the generator samples from.
    pub fn latent_dim(&self) -> usize {
        match &self.params {
            Params::Copula(c) => c.latent_dim(),
            _ => 0,
        }
    }

    pub fn prior(&self) -> &'static str {
        match self.params {
            Params::Copula(_) => "standard normal",
            Params::External(_) => "external",
            _ => "none",
        }
    }

    pub fn as_copula(&self) -> Option<&CopulaModel> {
        match &self.params {
            Params::Copula(c) => Some(c),
            _ => None,
        }
    }

    pub fn sample(&self, s: usize, seed: u64) -> Result<SyntheticBatch> {
        let mut records = match &self.params {
            Params::Bootstrap(m) => m.sample(s, seed),
            Params::Marginals(m) => m.sample(s, seed),
            Params::Copula(m) => m.sample(s, seed),
            Params::External(m) => m.sample(&self.schema, s, seed)?,
        };
        for (i, r) in records.iter_mut().enumerate() {
            r.arm = 0;
            r.enrolment_rank = self.rank_offset + i;
            r.enrolment = (self.rank_offset + i) as f64;
        }
        Ok(SyntheticBatch {
            schema: self.schema.clone(),
            records,
        })
    }

    /// Outcomes of `sample(s, seed)` without materialising the covariates.
    pub fn sample_outcomes(&self, s: usize, seed: u64) -> Result<Vec<u8>> {
        match &self.params {
            Params::Bootstrap(m) => Ok(m.sample_outcomes(s, seed)),
            Params::Marginals(m) => Ok(m.sample_outcomes(s, seed)),
            Params::Copula(m) => Ok(m.sample_outcomes(s, seed)),
            Params::External(_) => Ok(self.sample(s, seed)?.outcomes()),
        }
    }
}
