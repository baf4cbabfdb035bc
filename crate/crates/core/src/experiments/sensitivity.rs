use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{draw_training_set, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    averaged_from_moments, classify, mse, rct_effect, ArmSummary, EffectEstimate, Significance,
};
use crate::experiments::{check_l, correlation, replicate_moments, GeneratorConfig, HISTOGRAM_BINS};
use crate::generators::{fit, HyperParams};
use crate::seed::{derive_seed, stream};
use crate::tuning::{multi_trainset_tune, TuningResult};

/// Averaged estimate for one random training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRow {
    pub set: usize,
    /// Treated mean minus the training-set control mean.
    pub training_effect: f64,
    pub tau: f64,
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub delta_uncorrected: Option<f64>,
    pub significance: Significance,
    pub incompatible_with_rct: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub significant_positive: usize,
    pub significant_negative: usize,
    pub non_significant: usize,
    pub incompatible: usize,
}

impl DecisionCounts {
    pub fn tally(rows: &[SetRow]) -> Self {
        let mut c = Self::default();
        for r in rows {
            match r.significance {
                Significance::SignificantPositive => c.significant_positive += 1,
                Significance::SignificantNegative => c.significant_negative += 1,
                Significance::NonSignificant => c.non_significant += 1,
            }
            c.incompatible += usize::from(r.incompatible_with_rct);
        }
        c
    }

    pub fn significant(&self) -> usize {
        self.significant_positive + self.significant_negative
    }
}

/// Equal-width histogram; bin `i` covers `[edges[i], edges[i + 1])`, the last
/// bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() || bins == 0 {
            return Err(Error::InvalidArgument("histogram needs values and bins".into()));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = if max > min { bins } else { 1 };
        let width = (max - min) / bins as f64;
        let edges: Vec<f64> = (0..=bins)
            .map(|i| if i == bins { max } else { min + width * i as f64 })
            .collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let i = if width > 0.0 { ((v - min) / width).floor() as usize } else { 0 };
            counts[i.min(bins - 1)] += 1;
        }
        Ok(Self { edges, counts })
    }
}

/// Averaged-procedure effects over `k` random training sets of size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub generator: String,
    pub hyperparams: HyperParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningResult>,
    pub m0: usize,
    pub m1: usize,
    pub n: usize,
    pub s: usize,
    pub l: usize,
    pub k: usize,
    pub rct: EffectEstimate,
    pub rct_significance: Significance,
    pub counts: DecisionCounts,
    pub mse: f64,
    pub rmse: f64,
    /// Pearson correlation of training-set effect and averaged effect; absent
    /// when either is constant or `k < 2`.
    pub correlation: Option<f64>,
    pub sets: Vec<SetRow>,
    /// Sets ordered by training-set effect: the first, every 20th, and the last.
    pub panel: Vec<SetRow>,
    pub histogram: Histogram,
}

/// First, every 20th and last row by increasing training effect (ties by set).
pub fn panel_rows(rows: &[SetRow]) -> Vec<SetRow> {
    let mut sorted: Vec<&SetRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.training_effect.total_cmp(&b.training_effect).then(a.set.cmp(&b.set)));
    let last = sorted.len().saturating_sub(1);
    sorted
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 20 == 0 || *i == last)
        .map(|(_, r)| (*r).clone())
        .collect()
}

pub fn run_sensitivity(
    ds: &TrialDataset,
    n: usize,
    k: usize,
    generator: &GeneratorConfig,
    l: usize,
    seed: u64,
) -> Result<SensitivityReport> {
    check_l(l)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let rct = rct_effect(ds)?;
    let treated = ArmSummary::from_outcomes(&ds.arm_outcomes(1)?)?;
    let m0 = ds.m0();
    let coord = |c: &[u64]| {
        let mut v = vec![stream::SENSITIVITY];
        v.extend_from_slice(c);
        derive_seed(seed, &v)
    };

    let tuning = match &generator.tuning {
        Some(t) => Some(multi_trainset_tune(
            &generator.kind,
            ds,
            n,
            t.num_sets,
            &t.grid,
            t.folds,
            coord(&[stream::TUNING]),
        )?),
        None => None,
    };
    let hyperparams = tuning
        .as_ref()
        .map_or_else(|| generator.hyperparams.clone(), |t| t.best_params.clone());

    let sets = (0..k)
        .into_par_iter()
        .map(|i| {
            let set = i as u64;
            let train = ds.resolve(&draw_training_set(ds, n, coord(&[stream::DRAW, set]))?)?;
            let model = fit(&generator.kind, &train, &hyperparams, coord(&[stream::FIT, set]))?;
            let moments = replicate_moments(&model, &train, m0, l, |j| {
                coord(&[stream::REPLICATE, set, j as u64])
            })?;
            let est = averaged_from_moments(&moments, m0, &treated);
            let label = classify(&est, &rct);
            let train_mean = ArmSummary::from_outcomes(&train.outcomes()?)?.mean;
            Ok(SetRow {
                set: i,
                training_effect: treated.mean - train_mean,
                tau: est.tau,
                delta: est.delta,
                ci_low: est.ci_low,
                ci_high: est.ci_high,
                delta_uncorrected: est.delta_uncorrected,
                significance: label.significance,
                incompatible_with_rct: label.incompatible_with_rct,
            })
        })
        .collect::<Result<Vec<SetRow>>>()?;

    let taus: Vec<f64> = sets.iter().map(|r| r.tau).collect();
    let effects: Vec<f64> = sets.iter().map(|r| r.training_effect).collect();
    let (mse, rmse) = mse(&taus, rct.tau)?;
    Ok(SensitivityReport {
        generator: generator.kind.name().into(),
        hyperparams,
        tuning,
        m0,
        m1: ds.m1(),
        n,
        s: m0 - n,
        l,
        k,
        rct_significance: classify(&rct, &rct).significance,
        rct,
        counts: DecisionCounts::tally(&sets),
        mse,
        rmse,
        correlation: correlation(&effects, &taus).ok(),
        panel: panel_rows(&sets),
        histogram: Histogram::new(&taus, HISTOGRAM_BINS)?,
        sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{simulate_trial, SimSpec};
    use crate::generators::GeneratorKind;

    fn trial(m: usize, seed: u64) -> TrialDataset {
        simulate_trial(&SimSpec {
            m0: m,
            m1: m,
            p_treated: 0.3,
            p_control_start: 0.3,
            drift: 0.0,
            numeric_covariates: 1,
            categorical_covariates: vec![],
            seed,
        })
        .unwrap()
    }

    fn row(set: usize, training_effect: f64) -> SetRow {
        SetRow {
            set,
            training_effect,
            tau: 0.0,
            delta: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            delta_uncorrected: None,
            significance: Significance::NonSignificant,
            incompatible_with_rct: false,
        }
    }

    #[test]
    fn panel_selects_extremes_and_every_twentieth() {
        let rows: Vec<SetRow> = (0..45).map(|i| row(i, -(i as f64))).collect();
        let panel = panel_rows(&rows);
        let sets: Vec<usize> = panel.iter().map(|r| r.set).collect();
        assert_eq!(sets, vec![44, 24, 4, 0]);
        assert_eq!(panel_rows(&rows[..1]).len(), 1);
    }

    #[test]
    fn histogram_counts_everything() {
        let h = Histogram::new(&[0.0, 0.1, 0.2, 1.0], 4).unwrap();
        assert_eq!(h.edges.len(), 5);
        assert_eq!(h.counts, vec![3, 0, 0, 1]);
        let flat = Histogram::new(&[0.5; 3], 20).unwrap();
        assert_eq!((flat.edges, flat.counts), (vec![0.5, 0.5], vec![3]));
    }

    #[test]
    fn full_training_set_agrees_with_rct() {
        let ds = trial(40, 2);
        let r = run_sensitivity(&ds, 40, 1, &GeneratorConfig::new(GeneratorKind::Bootstrap), 5, 1).unwrap();
        assert_eq!(r.counts.incompatible, 0);
        assert_eq!(r.sets[0].significance, r.rct_significance);
        assert_eq!(r.sets[0].tau.to_bits(), r.rct.tau.to_bits());
        assert_eq!(r.correlation, None);
    }

    #[test]
    fn counts_match_rescan_and_bounded() {
        let ds = trial(200, 4);
        let r = run_sensitivity(&ds, 20, 30, &GeneratorConfig::new(GeneratorKind::Marginals), 20, 3).unwrap();
        let pos = r.sets.iter().filter(|s| s.ci_low > 0.0).count();
        let neg = r.sets.iter().filter(|s| s.ci_high < 0.0).count();
        let inc = r
            .sets
            .iter()
            .filter(|s| s.ci_low > r.rct.ci_high || s.ci_high < r.rct.ci_low)
            .count();
        assert_eq!((r.counts.significant_positive, r.counts.significant_negative, r.counts.incompatible), (pos, neg, inc));
        assert_eq!(r.counts.significant() + r.counts.non_significant, 30);
        let direct = r.sets.iter().map(|s| (s.tau - r.rct.tau).powi(2)).sum::<f64>() / 30.0;
        assert!((r.mse - direct).abs() <= 1e-12 * direct.max(1e-300));
        assert_eq!(r.histogram.counts.iter().sum::<usize>(), 30);
    }

    #[test]
    fn bootstrap_mirrors_training_effect() {
        let ds = trial(1000, 8);
        let r = run_sensitivity(&ds, 100, 60, &GeneratorConfig::new(GeneratorKind::Bootstrap), 200, 5).unwrap();
        assert!(r.correlation.unwrap() >= 0.9, "{:?}", r.correlation);
    }

    #[test]
    fn same_report_on_any_thread_count() {
        let ds = trial(80, 6);
        let cfg = GeneratorConfig::new(GeneratorKind::Copula);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| serde_json::to_vec(&run_sensitivity(&ds, 16, 12, &cfg, 9, 77).unwrap()).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
