//! Risk-difference estimators for the original trial and for control arms
//! completed with generated patients, plus the decision rules comparing them.
//!
//! Variances use the population convention (divide by arm size). For binary
//! outcomes every mean and variance is a function of the event count alone,
//! and is computed from that count, so two routes that see the same counts
//! agree bitwise.

use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Procedure {
    Rct,
    OneShot,
    Averaged { l: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub tau: f64,
    /// Control-side variance: the arm variance, or the mean of per-replicate
    /// variances for the averaged procedure.
    pub sigma2_control: f64,
    pub se: f64,
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub procedure: Procedure,
    /// Averaged procedure only: `z · σ_av`, the half-width obtained by
    /// applying the quantile to the averaged control standard deviation
    /// directly. Reported alongside; `delta` drives classification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_uncorrected: Option<f64>,
}

impl EffectEstimate {
    fn new(tau: f64, sigma2_control: f64, se: f64, procedure: Procedure) -> Self {
        let delta = Z_975 * se;
        Self {
            tau,
            sigma2_control,
            se,
            delta,
            ci_low: tau - delta,
            ci_high: tau + delta,
            procedure,
            delta_uncorrected: None,
        }
    }

    /// Rebuilds an estimate from an explicit point and half-width.
    pub fn from_interval(tau: f64, delta: f64, procedure: Procedure) -> Self {
        Self {
            tau,
            sigma2_control: f64::NAN,
            se: delta / Z_975,
            delta,
            ci_low: tau - delta,
            ci_high: tau + delta,
            procedure,
            delta_uncorrected: None,
        }
    }
}

/// Mean, population variance and size of one arm's binary outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub mean: f64,
    pub variance: f64,
    pub size: usize,
}

impl ArmSummary {
    pub fn from_outcomes(y: &[u8]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidArgument("empty arm".into()));
        }
        let (mean, variance) = binary_moments(count_events(y)?, y.len());
        Ok(Self {
            mean,
            variance,
            size: y.len(),
        })
    }
}

fn count_events(y: &[u8]) -> Result<usize> {
    let mut ones = 0;
    for &v in y {
        match v {
            0 => {}
            1 => ones += 1,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "outcome {other} is not binary"
                )))
            }
        }
    }
    Ok(ones)
}

/// Mean and `(1/m)·Σ(y − μ)²` of `size` binary values with `ones` events.
fn binary_moments(ones: usize, size: usize) -> (f64, f64) {
    let m = size as f64;
    let mean = ones as f64 / m;
    let var = (ones as f64 * (1.0 - mean).powi(2) + (size - ones) as f64 * mean.powi(2)) / m;
    (mean, var)
}

fn standard_error(treated: &ArmSummary, control_var: f64, m0: usize) -> f64 {
    (treated.variance / treated.size as f64 + control_var / m0 as f64).sqrt()
}

/// Difference of means between arms with its normal-approximation interval.
pub fn rct_effect(ds: &TrialDataset) -> Result<EffectEstimate> {
    let treated = ArmSummary::from_outcomes(&ds.arm_outcomes(1)?)?;
    let control = ArmSummary::from_outcomes(&ds.arm_outcomes(0)?)?;
    Ok(effect_from_arms(&treated, &control))
}

pub fn effect_from_arms(treated: &ArmSummary, control: &ArmSummary) -> EffectEstimate {
    let se = standard_error(treated, control.variance, control.size);
    EffectEstimate::new(
        treated.mean - control.mean,
        control.variance,
        se,
        Procedure::Rct,
    )
}

/// Control mean and variance of one completed control arm.
fn augmented_moments(train_events: usize, gen: &[u8], m0: usize) -> Result<(f64, f64)> {
    Ok(binary_moments(train_events + count_events(gen)?, m0))
}

fn check_sizes(n: usize, s: usize, m0: usize) -> Result<()> {
    if m0 == 0 {
        return Err(Error::InvalidArgument("empty control arm".into()));
    }
    if n + s != m0 {
        return Err(Error::InvalidArgument(format!(
            "training size {n} + generated size {s} != control size {m0}"
        )));
    }
    Ok(())
}

/// Mean and population variance of the control arm completed with `gen_y`.
pub fn augmented_control(train_y: &[u8], gen_y: &[u8], m0: usize) -> Result<(f64, f64)> {
    check_sizes(train_y.len(), gen_y.len(), m0)?;
    augmented_moments(count_events(train_y)?, gen_y, m0)
}

/// One completed control arm analysed as if it were a trial.
pub fn one_shot(
    train_y: &[u8],
    gen_y: &[u8],
    m0: usize,
    treated: &ArmSummary,
) -> Result<EffectEstimate> {
    check_sizes(train_y.len(), gen_y.len(), m0)?;
    let (mu, var) = augmented_moments(count_events(train_y)?, gen_y, m0)?;
    Ok(EffectEstimate::new(
        treated.mean - mu,
        var,
        standard_error(treated, var, m0),
        Procedure::OneShot,
    ))
}

/// Mean of a sequence by running update; exact when all values are equal.
fn running_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (k, x) in values.into_iter().enumerate() {
        mean = if k == 0 { x } else { mean + (x - mean) / (k + 1) as f64 };
    }
    mean
}

/// `l` completed control arms; effects and control variances are averaged.
pub fn averaged<B: AsRef<[u8]>>(
    train_y: &[u8],
    gen_batches: &[B],
    m0: usize,
    treated: &ArmSummary,
) -> Result<EffectEstimate> {
    let first = gen_batches
        .first()
        .ok_or_else(|| Error::InvalidArgument("averaged procedure needs l >= 1".into()))?;
    let s = first.as_ref().len();
    if let Some(bad) = gen_batches.iter().find(|b| b.as_ref().len() != s) {
        return Err(Error::InvalidArgument(format!(
            "ragged batches: lengths {s} and {}",
            bad.as_ref().len()
        )));
    }
    check_sizes(train_y.len(), s, m0)?;
    let train_events = count_events(train_y)?;
    let moments = gen_batches
        .iter()
        .map(|b| augmented_moments(train_events, b.as_ref(), m0))
        .collect::<Result<Vec<_>>>()?;
    Ok(averaged_from_moments(&moments, m0, treated))
}

/// Averaged estimate from per-replicate `(μ̂_j, σ̂²_j)` pairs.
pub fn averaged_from_moments(moments: &[(f64, f64)], m0: usize, treated: &ArmSummary) -> EffectEstimate {
    let tau = running_mean(moments.iter().map(|&(mu, _)| treated.mean - mu));
    let sigma2 = running_mean(moments.iter().map(|&(_, v)| v));
    let mut est = EffectEstimate::new(
        tau,
        sigma2,
        standard_error(treated, sigma2, m0),
        Procedure::Averaged { l: moments.len() },
    );
    est.delta_uncorrected = Some(Z_975 * sigma2.sqrt());
    est
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    SignificantPositive,
    SignificantNegative,
    NonSignificant,
}

impl Significance {
    pub fn is_significant(self) -> bool {
        self != Significance::NonSignificant
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Significance::SignificantPositive => "significant_positive",
            Significance::SignificantNegative => "significant_negative",
            Significance::NonSignificant => "non_significant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionLabel {
    pub significance: Significance,
    /// The two confidence intervals are disjoint.
    pub incompatible_with_rct: bool,
}

/// Labels an estimate by its interval's position relative to 0 and to the
/// reference interval. All comparisons are strict.
pub fn classify(est: &EffectEstimate, rct: &EffectEstimate) -> DecisionLabel {
    let significance = if est.ci_low > 0.0 {
        Significance::SignificantPositive
    } else if est.ci_high < 0.0 {
        Significance::SignificantNegative
    } else {
        Significance::NonSignificant
    };
    DecisionLabel {
        significance,
        incompatible_with_rct: est.ci_low > rct.ci_high || est.ci_high < rct.ci_low,
    }
}

/// Mean squared error of `estimates` around `tau_bar`, and its root.
pub fn mse(estimates: &[f64], tau_bar: f64) -> Result<(f64, f64)> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("mse of an empty list".into()));
    }
    let mse = estimates.iter().map(|t| (t - tau_bar).powi(2)).sum::<f64>() / estimates.len() as f64;
    Ok((mse, mse.sqrt()))
}
