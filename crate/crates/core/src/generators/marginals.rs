use rand::Rng;

use crate::data::{Cell, ColumnKind, PatientRecord, TrainingData};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone)]
enum Marginal {
    /// Observed values, drawn uniformly.
    Numeric(Vec<f64>),
    /// Cumulative category probabilities.
    Categorical(Vec<f64>),
}

impl Marginal {
    fn draw<R: Rng>(&self, rng: &mut R) -> Cell {
        match self {
            Marginal::Numeric(values) => Cell::Num(values[rng.random_range(0..values.len())]),
            Marginal::Categorical(cum) => Cell::Cat(pick(cum, rng.random())),
        }
    }
}

fn pick(cumulative: &[f64], u: f64) -> u32 {
    let mut last = 0;
    for (c, &f) in cumulative.iter().enumerate() {
        let prev = if c == 0 { 0.0 } else { cumulative[c - 1] };
        if f > prev {
            last = c;
            if u < f {
                return c as u32;
            }
        }
    }
    last as u32
}

fn cumulative(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    let mut acc = 0.0;
    counts
        .iter()
        .map(|c| {
            acc += c;
            acc / total
        })
        .collect()
}

/// Independent per-column empirical distributions, with optional Laplace
/// smoothing of categorical frequencies. Each column draws from its own
/// random stream.
#[derive(Debug, Clone)]
pub struct MarginalsModel {
    covariates: Vec<Marginal>,
    outcome: Marginal,
}

impl MarginalsModel {
    pub(crate) fn fit(train: &TrainingData, alpha: f64) -> Self {
        let covariates = train
            .schema
            .covariates()
            .enumerate()
            .map(|(j, spec)| match spec.kind {
                ColumnKind::Numeric => Marginal::Numeric(
                    train
                        .records
                        .iter()
                        .filter_map(|r| r.covariates[j].as_num())
                        .collect(),
                ),
                _ => {
                    let mut counts = vec![alpha; spec.categories.len()];
                    for r in &train.records {
                        if let Some(c) = r.covariates[j].as_cat() {
                            counts[c as usize] += 1.0;
                        }
                    }
                    Marginal::Categorical(cumulative(&counts))
                }
            })
            .collect();
        let mut counts = vec![alpha; 2];
        for r in &train.records {
            if let Some(y) = r.outcome {
                counts[y as usize] += 1.0;
            }
        }
        Self {
            covariates,
            outcome: Marginal::Categorical(cumulative(&counts)),
        }
    }

    /// Probability of each category of covariate `j` (categorical only).
    pub fn category_probabilities(&self, j: usize) -> Option<Vec<f64>> {
        match &self.covariates[j] {
            Marginal::Categorical(cum) => Some(
                cum.iter()
                    .enumerate()
                    .map(|(c, &f)| if c == 0 { f } else { f - cum[c - 1] })
                    .collect(),
            ),
            Marginal::Numeric(_) => None,
        }
    }

    fn outcome_stream(&self, seed: u64) -> u64 {
        derive_seed(seed, &[self.covariates.len() as u64])
    }

    pub(crate) fn sample(&self, s: usize, seed: u64) -> Vec<PatientRecord> {
        let mut columns: Vec<Vec<Cell>> = self
            .covariates
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let mut rng = rng_from_seed(derive_seed(seed, &[j as u64]));
                (0..s).map(|_| m.draw(&mut rng)).collect()
            })
            .collect();
        let outcomes = self.sample_outcomes(s, seed);
        let mut records = Vec::with_capacity(s);
        for (i, y) in outcomes.into_iter().enumerate() {
            records.push(PatientRecord {
                covariates: columns.iter_mut().map(|c| c[i]).collect(),
                outcome: Some(y),
                arm: 0,
                enrolment: 0.0,
                enrolment_rank: 0,
            });
        }
        records
    }

    pub(crate) fn sample_outcomes(&self, s: usize, seed: u64) -> Vec<u8> {
        let mut rng = rng_from_seed(self.outcome_stream(seed));
        (0..s)
            .map(|_| match self.outcome.draw(&mut rng) {
                Cell::Cat(c) => c as u8,
                _ => unreachable!("outcome marginal is categorical"),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::test_support::training;

    #[test]
    fn category_frequencies_match_training() {
        let train = training(300, 0.3, 8);
        let model = MarginalsModel::fit(&train, 0.0);
        let s = 100_000;
        let batch = model.sample(s, 5);

        let mut want = [0.0f64; 3];
        for r in &train.records {
            want[r.covariates[1].as_cat().unwrap() as usize] += 1.0 / 300.0;
        }
        let mut got = [0.0f64; 3];
        for r in &batch {
            got[r.covariates[1].as_cat().unwrap() as usize] += 1.0 / s as f64;
        }
        for c in 0..3 {
            let se = (want[c] * (1.0 - want[c]) / s as f64).sqrt();
            assert!((got[c] - want[c]).abs() <= 3.0 * se, "cat {c}: {} vs {}", got[c], want[c]);
        }

        // Numeric values: frequency of values below the training median.
        let mut ages: Vec<f64> = train.records.iter().map(|r| r.covariates[0].as_num().unwrap()).collect();
        ages.sort_by(f64::total_cmp);
        let cut = ages[150];
        let want = ages.iter().filter(|&&a| a < cut).count() as f64 / 300.0;
        let got = batch.iter().filter(|r| r.covariates[0].as_num().unwrap() < cut).count() as f64 / s as f64;
        let se = (want * (1.0 - want) / s as f64).sqrt();
        assert!((got - want).abs() <= 3.0 * se);
    }

    #[test]
    fn laplace_smoothing() {
        let mut train = training(4, 0.3, 8);
        for r in &mut train.records {
            r.covariates[1] = Cell::Cat(0);
        }
        let plain = MarginalsModel::fit(&train, 0.0);
        assert_eq!(plain.category_probabilities(1).unwrap(), vec![1.0, 0.0, 0.0]);
        let smooth = MarginalsModel::fit(&train, 1.0);
        let p = smooth.category_probabilities(1).unwrap();
        assert!((p[0] - 5.0 / 7.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 7.0).abs() < 1e-12);
        assert!(plain.category_probabilities(0).is_none());
    }

    #[test]
    fn zero_probability_categories_never_drawn() {
        assert_eq!(pick(&[0.0, 1.0, 1.0], 0.0), 1);
        assert_eq!(pick(&[0.0, 1.0, 1.0], 0.999_999), 1);
        assert_eq!(pick(&[0.5, 0.5, 1.0], 0.5), 2);
    }
}
