use serde::{Deserialize, Serialize};

use crate::data::{select_n_first, TrialDataset};
use crate::error::Result;
use crate::estimators::{
    averaged_from_moments, classify, one_shot, rct_effect, ArmSummary, DecisionLabel,
    EffectEstimate, Significance,
};
use crate::experiments::{check_l, relative_difference, replicate_moments, GeneratorConfig};
use crate::generators::{fit, HyperParams};
use crate::seed::{derive_seed, stream};
use crate::tuning::{grid_search_cv, TuningResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub tau: f64,
    pub sigma2_control: f64,
}

/// Effects of the trial whose control arm is the `n` first-enrolled control
/// patients completed with `s = m0 − n` generated ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NFirstReport {
    pub generator: String,
    pub hyperparams: HyperParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningResult>,
    pub m0: usize,
    pub m1: usize,
    pub n: usize,
    pub s: usize,
    pub l: usize,
    /// Treated mean minus the training-set control mean.
    pub training_effect: f64,
    pub rct: EffectEstimate,
    pub rct_significance: Significance,
    pub one_shot: EffectEstimate,
    pub one_shot_label: DecisionLabel,
    pub averaged: EffectEstimate,
    pub averaged_label: DecisionLabel,
    /// Percent; absent when the trial effect is exactly zero.
    pub relative_difference_one_shot: Option<f64>,
    pub relative_difference_averaged: Option<f64>,
    pub replicates: Vec<ReplicateRow>,
}

pub fn run_n_first(
    ds: &TrialDataset,
    n: usize,
    generator: &GeneratorConfig,
    l: usize,
    seed: u64,
) -> Result<NFirstReport> {
    check_l(l)?;
    let rct = rct_effect(ds)?;
    let treated = ArmSummary::from_outcomes(&ds.arm_outcomes(1)?)?;
    let train = ds.resolve(&select_n_first(ds, n)?)?;
    let train_y = train.outcomes()?;
    let (m0, s) = (ds.m0(), ds.m0() - n);
    let coord = |c: &[u64]| {
        let mut v = vec![stream::N_FIRST];
        v.extend_from_slice(c);
        derive_seed(seed, &v)
    };

    let tuning = match &generator.tuning {
        Some(t) => Some(grid_search_cv(&generator.kind, &train, &t.grid, t.folds, coord(&[stream::TUNING]))?),
        None => None,
    };
    let hyperparams = tuning
        .as_ref()
        .map_or_else(|| generator.hyperparams.clone(), |t| t.best_params.clone());
    let model = fit(&generator.kind, &train, &hyperparams, coord(&[stream::FIT]))?;

    let gen_y = model.sample_outcomes(s, coord(&[stream::ONE_SHOT]))?;
    let one_shot = one_shot(&train_y, &gen_y, m0, &treated)?;
    let moments = replicate_moments(&model, &train, m0, l, |j| {
        coord(&[stream::REPLICATE, j as u64])
    })?;
    let averaged = averaged_from_moments(&moments, m0, &treated);
    let replicates = moments
        .iter()
        .enumerate()
        .map(|(j, &(mu, var))| ReplicateRow {
            replicate: j,
            tau: treated.mean - mu,
            sigma2_control: var,
        })
        .collect();
    let train_mean = ArmSummary::from_outcomes(&train_y)?.mean;

    Ok(NFirstReport {
        generator: generator.kind.name().into(),
        hyperparams,
        tuning,
        m0,
        m1: ds.m1(),
        n,
        s,
        l,
        training_effect: treated.mean - train_mean,
        rct_significance: classify(&rct, &rct).significance,
        one_shot_label: classify(&one_shot, &rct),
        averaged_label: classify(&averaged, &rct),
        relative_difference_one_shot: relative_difference(one_shot.tau, rct.tau),
        relative_difference_averaged: relative_difference(averaged.tau, rct.tau),
        rct,
        one_shot,
        averaged,
        replicates,
    })
}
