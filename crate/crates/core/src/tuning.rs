//! Cross-validated grid search over generator hyperparameters.
//!
//! Every candidate is evaluated on the same folds with the same fit and sample
//! seeds, so score differences between candidates come from the
//! hyperparameters alone.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{draw_training_set, PatientRecord, TrainingData, TrialDataset};
use crate::error::{Error, Result};
use crate::fidelity::general_score;
use crate::generators::{fit, GeneratorKind, HyperParams, SyntheticBatch};
use crate::seed::{derive_seed, rng_from_seed, stream};

/// Candidate values per hyperparameter. An empty grid has exactly one
/// candidate: the empty parameter map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperGrid(BTreeMap<String, Vec<serde_json::Value>>);

impl HyperGrid {
    pub fn new(params: BTreeMap<String, Vec<serde_json::Value>>) -> Result<Self> {
        if let Some((key, _)) = params.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::InvalidArgument(format!(
                "hyperparameter `{key}` has no candidate values"
            )));
        }
        Ok(Self(params))
    }

    pub fn size(&self) -> usize {
        self.0.values().map(Vec::len).product()
    }

    /// Cartesian product in key order, the last key varying fastest.
    pub fn candidates(&self) -> Vec<HyperParams> {
        let keys: Vec<&String> = self.0.keys().collect();
        let lists: Vec<&Vec<serde_json::Value>> = self.0.values().collect();
        let mut out = Vec::with_capacity(self.size());
        let mut odometer = vec![0usize; keys.len()];
        for _ in 0..self.size() {
            out.push(
                keys.iter()
                    .zip(&lists)
                    .zip(&odometer)
                    .map(|((k, list), &i)| ((*k).clone(), list[i].clone()))
                    .collect(),
            );
            for pos in (0..odometer.len()).rev() {
                odometer[pos] += 1;
                if odometer[pos] < lists[pos].len() {
                    break;
                }
                odometer[pos] = 0;
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.0.values().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
        }
        Ok(())
    }
}

/// Scores a synthetic batch against the held-out fold it was sized for.
pub trait FoldScorer: Sync {
    fn score(
        &self,
        candidate: &HyperParams,
        held_out: &TrainingData,
        batch: &SyntheticBatch,
    ) -> Result<f64>;
}

/// The fidelity general score.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeneralScore;

impl FoldScorer for GeneralScore {
    fn score(&self, _: &HyperParams, held_out: &TrainingData, batch: &SyntheticBatch) -> Result<f64> {
        Ok(general_score(&held_out.schema, &held_out.records, &batch.schema, &batch.records)?.overall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub params: HyperParams,
    pub mean: f64,
    /// Fold scores, one list per training set.
    pub fold_scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best_index: usize,
    pub best_params: HyperParams,
    pub best_score: f64,
    pub candidates: Vec<CandidateScore>,
}

impl TuningResult {
    fn from_candidates(candidates: Vec<CandidateScore>) -> Self {
        let mut best = 0;
        for (i, c) in candidates.iter().enumerate() {
            if c.mean > candidates[best].mean {
                best = i;
            }
        }
        Self {
            best_index: best,
            best_params: candidates[best].params.clone(),
            best_score: candidates[best].mean,
            candidates,
        }
    }
}

/// Shuffles `0..n` and cuts it into `folds` contiguous chunks whose sizes
/// differ by at most one.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::InvalidArgument(format!(
            "{folds} folds requested for {n} training records"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

struct Fold {
    train: TrainingData,
    held_out: TrainingData,
}

fn split(train: &TrainingData, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    let parts = fold_partition(train.n(), folds, derive_seed(seed, &[stream::FOLDS]))?;
    let pick = |idx: &mut dyn Iterator<Item = &usize>| -> Vec<PatientRecord> {
        idx.map(|&i| train.records[i].clone()).collect()
    };
    Ok((0..folds)
        .map(|f| {
            let rest = pick(&mut parts.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, p)| p));
            Fold {
                train: TrainingData::new(train.schema.clone(), rest, train.rank_offset),
                held_out: TrainingData::new(train.schema.clone(), pick(&mut parts[f].iter()), 0),
            }
        })
        .collect())
}

/// Fold scores per candidate, in grid order.
fn fold_scores(
    kind: &GeneratorKind,
    train: &TrainingData,
    grid: &HyperGrid,
    folds: usize,
    seed: u64,
    scorer: &dyn FoldScorer,
) -> Result<Vec<(HyperParams, Vec<f64>)>> {
    grid.validate()?;
    let split = split(train, folds, seed)?;
    let candidates = grid.candidates();
    let tasks: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..folds).map(move |f| (c, f)))
        .collect();
    let scores = tasks
        .par_iter()
        .map(|&(c, f)| {
            let fold = &split[f];
            let model = fit(kind, &fold.train, &candidates[c], derive_seed(seed, &[stream::FIT, f as u64]))?;
            let batch = model.sample(fold.held_out.n(), derive_seed(seed, &[stream::SAMPLE, f as u64]))?;
            scorer.score(&candidates[c], &fold.held_out, &batch)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(candidates
        .into_iter()
        .zip(scores.chunks(folds))
        .map(|(p, s)| (p, s.to_vec()))
        .collect())
}

/// Grid search with `folds`-fold cross-validation, scored by the general
/// fidelity score of a held-out-sized batch against the held-out fold.
pub fn grid_search_cv(
    kind: &GeneratorKind,
    train: &TrainingData,
    grid: &HyperGrid,
    folds: usize,
    seed: u64,
) -> Result<TuningResult> {
    grid_search_cv_with(kind, train, grid, folds, seed, &GeneralScore)
}

pub fn grid_search_cv_with(
    kind: &GeneratorKind,
    train: &TrainingData,
    grid: &HyperGrid,
    folds: usize,
    seed: u64,
    scorer: &dyn FoldScorer,
) -> Result<TuningResult> {
    let candidates = fold_scores(kind, train, grid, folds, seed, scorer)?
        .into_iter()
        .map(|(params, scores)| CandidateScore {
            params,
            mean: mean(&scores),
            fold_scores: vec![scores],
        })
        .collect();
    Ok(TuningResult::from_candidates(candidates))
}

/// Seed of the `i`-th training-set draw and of its cross-validation.
pub fn tuning_set_seeds(seed: u64, i: usize) -> (u64, u64) {
    (
        derive_seed(seed, &[stream::SET, i as u64]),
        derive_seed(seed, &[stream::TUNING, i as u64]),
    )
}

/// Cross-validates on `num_sets` random training sets of size `n` and
/// averages each candidate's mean score across sets.
pub fn multi_trainset_tune(
    kind: &GeneratorKind,
    ds: &TrialDataset,
    n: usize,
    num_sets: usize,
    grid: &HyperGrid,
    folds: usize,
    seed: u64,
) -> Result<TuningResult> {
    if num_sets == 0 {
        return Err(Error::InvalidArgument("need at least one tuning set".into()));
    }
    let mut per_set = Vec::with_capacity(num_sets);
    for i in 0..num_sets {
        let (draw_seed, cv_seed) = tuning_set_seeds(seed, i);
        let train = ds.resolve(&draw_training_set(ds, n, draw_seed)?)?;
        per_set.push(fold_scores(kind, &train, grid, folds, cv_seed, &GeneralScore)?);
    }
    let candidates = (0..per_set[0].len())
        .map(|c| {
            let fold_scores: Vec<Vec<f64>> = per_set.iter().map(|s| s[c].1.clone()).collect();
            let set_means: Vec<f64> = fold_scores.iter().map(|s| mean(s)).collect();
            CandidateScore {
                params: per_set[0][c].0.clone(),
                mean: mean(&set_means),
                fold_scores,
            }
        })
        .collect();
    Ok(TuningResult::from_candidates(candidates))
}
