use rand::Rng;

use crate::data::{PatientRecord, TrainingData};
use crate::seed::rng_from_seed;

/// Resamples training records uniformly with replacement.
#[derive(Debug, Clone)]
pub struct BootstrapModel {
    records: Vec<PatientRecord>,
    outcomes: Vec<u8>,
}

impl BootstrapModel {
    pub(crate) fn fit(train: &TrainingData) -> Self {
        Self {
            records: train.records.clone(),
            outcomes: train.records.iter().map(|r| r.outcome.unwrap_or(0)).collect(),
        }
    }

    pub fn training_records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub(crate) fn sample(&self, s: usize, seed: u64) -> Vec<PatientRecord> {
        let mut rng = rng_from_seed(seed);
        let n = self.records.len();
        (0..s)
            .map(|_| self.records[rng.random_range(0..n)].clone())
            .collect()
    }

    pub(crate) fn sample_outcomes(&self, s: usize, seed: u64) -> Vec<u8> {
        let mut rng = rng_from_seed(seed);
        let n = self.outcomes.len();
        (0..s)
            .map(|_| self.outcomes[rng.random_range(0..n)])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::test_support::training;

    #[test]
    fn samples_are_training_members() {
        let train = training(3, 0.5, 4);
        let model = BootstrapModel::fit(&train);
        for r in model.sample(500, 9) {
            assert!(train.records.contains(&r));
        }
    }

    #[test]
    fn outcome_mean_binomial() {
        // Train with outcome mean exactly 0.4.
        let mut train = training(10, 0.5, 4);
        for (i, r) in train.records.iter_mut().enumerate() {
            r.outcome = Some(u8::from(i < 4));
        }
        let s = 100_000;
        let y = BootstrapModel::fit(&train).sample_outcomes(s, 12);
        let mean = y.iter().map(|&v| f64::from(v)).sum::<f64>() / s as f64;
        let se = (0.24f64 / s as f64).sqrt();
        assert!((mean - 0.4).abs() <= 3.0 * se, "{mean}");
    }
}
