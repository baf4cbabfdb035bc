//! Gaussian copula over mixed numeric and categorical columns.
//!
//! Fitting maps each column to a latent standard-normal score: numeric columns
//! through their average-tie rank, `Φ⁻¹((rank − ½)/n)`; categorical columns
//! (the outcome included) through the normal score of the midpoint of the
//! category's cumulative-probability interval. The latent correlation matrix
//! is the Pearson correlation of those scores, shrunk toward the identity
//! until it admits a Cholesky factor.
//!
//! Sampling draws `Z ~ N(0, I_q)`, correlates it with the Cholesky factor and
//! maps every coordinate back through its column's marginal, so each column
//! reproduces its training distribution exactly.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Cell, ColumnKind, PatientRecord, TrainingData};
use crate::seed::rng_from_seed;

pub(crate) const DEFAULT_SHRINKAGE: f64 = 1e-6;

fn std_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

#[derive(Debug, Clone)]
enum Marginal {
    /// Sorted training values; latent `x` maps to `values[⌊Φ(x)·n⌋]`.
    Numeric(Vec<f64>),
    /// Latent cut points: category `c` is chosen when `x < cuts[c]`,
    /// the last category otherwise.
    Categorical { cuts: Vec<f64> },
}

impl Marginal {
    fn invert(&self, x: f64) -> Cell {
        match self {
            Marginal::Numeric(values) => {
                let n = values.len();
                let idx = ((normal_cdf(x) * n as f64) as usize).min(n - 1);
                Cell::Num(values[idx])
            }
            Marginal::Categorical { cuts } => Cell::Cat(category_for(cuts, x)),
        }
    }
}

fn category_for(cuts: &[f64], x: f64) -> u32 {
    cuts.iter().position(|&t| x < t).unwrap_or(cuts.len()) as u32
}

/// Average ranks (1-based) with ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn numeric_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    average_ranks(values)
        .into_iter()
        .map(|r| normal_quantile((r - 0.5) / n))
        .collect()
}

/// Returns (latent scores per record, cut points) for a categorical column.
fn categorical_scores(codes: &[u32], levels: usize) -> (Vec<f64>, Vec<f64>) {
    let n = codes.len() as f64;
    let mut counts = vec![0usize; levels];
    for &c in codes {
        counts[c as usize] += 1;
    }
    let mut upper = Vec::with_capacity(levels);
    let mut acc = 0usize;
    for &k in &counts {
        acc += k;
        upper.push(acc as f64 / n);
    }
    let lower = |c: usize| if c == 0 { 0.0 } else { upper[c - 1] };
    let mids: Vec<f64> = (0..levels)
        .map(|c| normal_quantile((lower(c) + upper[c]) / 2.0))
        .collect();
    let cuts = upper[..levels - 1]
        .iter()
        .map(|&f| {
            if f <= 0.0 {
                f64::NEG_INFINITY
            } else if f >= 1.0 {
                f64::INFINITY
            } else {
                normal_quantile(f)
            }
        })
        .collect();
    (codes.iter().map(|&c| mids[c as usize]).collect(), cuts)
}

fn pearson_matrix(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let q = columns.len();
    let n = columns.first().map_or(0, Vec::len) as f64;
    let centred: Vec<(Vec<f64>, f64)> = columns
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n;
            let d: Vec<f64> = c.iter().map(|x| x - mean).collect();
            let ss = d.iter().map(|x| x * x).sum::<f64>();
            (d, ss)
        })
        .collect();
    DMatrix::from_fn(q, q, |a, b| {
        if a == b {
            return 1.0;
        }
        let (da, sa) = &centred[a];
        let (db, sb) = &centred[b];
        if *sa <= 0.0 || *sb <= 0.0 {
            return 0.0;
        }
        let cov: f64 = da.iter().zip(db).map(|(x, y)| x * y).sum();
        (cov / (sa * sb).sqrt()).clamp(-1.0, 1.0)
    })
}

#[derive(Debug, Clone)]
pub struct CopulaModel {
    /// Covariate marginals followed by the outcome marginal.
    marginals: Vec<Marginal>,
    correlation: DMatrix<f64>,
    cholesky: DMatrix<f64>,
    shrinkage: f64,
}

impl CopulaModel {
    pub(crate) fn fit(train: &TrainingData, initial_shrinkage: f64) -> Self {
        let mut marginals = Vec::new();
        let mut scores = Vec::new();
        for (j, spec) in train.schema.covariates().enumerate() {
            match spec.kind {
                ColumnKind::Numeric => {
                    let values: Vec<f64> = train
                        .records
                        .iter()
                        .map(|r| r.covariates[j].as_num().expect("complete numeric"))
                        .collect();
                    scores.push(numeric_scores(&values));
                    let mut sorted = values;
                    sorted.sort_by(f64::total_cmp);
                    marginals.push(Marginal::Numeric(sorted));
                }
                _ => {
                    let codes: Vec<u32> = train
                        .records
                        .iter()
                        .map(|r| r.covariates[j].as_cat().expect("complete categorical"))
                        .collect();
                    let (z, cuts) = categorical_scores(&codes, spec.categories.len());
                    scores.push(z);
                    marginals.push(Marginal::Categorical { cuts });
                }
            }
        }
        let outcomes: Vec<u32> = train
            .records
            .iter()
            .map(|r| u32::from(r.outcome.expect("complete outcome")))
            .collect();
        let (z, cuts) = categorical_scores(&outcomes, 2);
        scores.push(z);
        marginals.push(Marginal::Categorical { cuts });

        let correlation = pearson_matrix(&scores);
        let q = correlation.nrows();
        let identity = DMatrix::<f64>::identity(q, q);
        let mut lambda = initial_shrinkage;
        let (cholesky, shrinkage) = loop {
            let shrunk = &correlation * (1.0 - lambda) + &identity * lambda;
            if let Some(ch) = shrunk.cholesky() {
                break (ch.l(), lambda);
            }
            if lambda >= 1.0 {
                break (identity.clone(), 1.0);
            }
            lambda = (lambda * 10.0).min(1.0);
        };
        if shrinkage > initial_shrinkage {
            log::debug!("copula correlation shrinkage raised to {shrinkage}");
        }
        Self {
            marginals,
            correlation,
            cholesky,
            shrinkage,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.marginals.len()
    }

    /// Unregularised latent correlation matrix (outcome last).
    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    /// Shrinkage actually applied to obtain a Cholesky factor.
    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    fn latent_row<R: rand::Rng>(&self, rng: &mut R, z: &mut [f64]) {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
    }

    fn correlate(&self, z: &[f64], row: usize) -> f64 {
        let l = &self.cholesky;
        (0..=row).map(|k| l[(row, k)] * z[k]).sum()
    }

    pub(crate) fn sample(&self, s: usize, seed: u64) -> Vec<PatientRecord> {
        let mut rng = rng_from_seed(seed);
        let q = self.latent_dim();
        let mut z = vec![0.0; q];
        (0..s)
            .map(|_| {
                self.latent_row(&mut rng, &mut z);
                let mut covariates = Vec::with_capacity(q - 1);
                for j in 0..q - 1 {
                    covariates.push(self.marginals[j].invert(self.correlate(&z, j)));
                }
                let outcome = match self.marginals[q - 1].invert(self.correlate(&z, q - 1)) {
                    Cell::Cat(c) => c as u8,
                    _ => unreachable!(),
                };
                PatientRecord {
                    covariates,
                    outcome: Some(outcome),
                    arm: 0,
                    enrolment: 0.0,
                    enrolment_rank: 0,
                }
            })
            .collect()
    }

    pub(crate) fn sample_outcomes(&self, s: usize, seed: u64) -> Vec<u8> {
        let mut rng = rng_from_seed(seed);
        let q = self.latent_dim();
        let cuts = match &self.marginals[q - 1] {
            Marginal::Categorical { cuts } => cuts.clone(),
            Marginal::Numeric(_) => unreachable!(),
        };
        let mut z = vec![0.0; q];
        (0..s)
            .map(|_| {
                self.latent_row(&mut rng, &mut z);
                category_for(&cuts, self.correlate(&z, q - 1)) as u8
            })
            .collect()
    }
}
