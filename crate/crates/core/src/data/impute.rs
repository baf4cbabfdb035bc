//! Single chained-equations imputation.
//!
//! Missing cells are first filled with random observed values of their column.
//! Each sweep then visits the incomplete columns in increasing order of
//! missingness and redraws their missing cells from a model fitted on the rows
//! where that column is observed, using every other column (and the arm) as
//! predictors:
//!
//! - numeric columns: least-squares regression plus Gaussian residual noise;
//! - categorical columns and the outcome: logistic regression by IRLS
//!   (one-vs-rest for more than two categories), then a categorical draw.
//!
//! A singular design or a non-converging logistic fit falls back to sampling
//! from the column's observed marginal distribution for that sweep.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::dataset::{Cell, TrialDataset};
use crate::data::schema::ColumnKind;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, stream, SimRng};

pub const IRLS_MAX_ITER: usize = 25;
pub const IRLS_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
enum Values {
    Num(Vec<f64>),
    Cat { codes: Vec<u32>, levels: usize },
}

#[derive(Debug, Clone)]
struct WorkColumn {
    name: String,
    values: Values,
    missing: Vec<bool>,
}

impl WorkColumn {
    fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }
}

/// Fills every missing covariate and outcome cell. Deterministic given `seed`.
pub fn impute_chained(ds: &TrialDataset, iterations: usize, seed: u64) -> Result<TrialDataset> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    let mut columns = gather(ds);
    for col in &columns {
        if col.missing.iter().all(|&m| m) {
            return Err(Error::FullyMissingColumn(col.name.clone()));
        }
    }
    if !ds.has_missing() {
        return Ok(ds.clone());
    }

    let mut rng = rng_from_seed(derive_seed(seed, &[stream::IMPUTATION]));
    for col in &mut columns {
        initial_fill(col, &mut rng);
    }

    // The arm is a predictor only; it is never missing.
    let arm: Vec<f64> = ds.records().iter().map(|r| f64::from(r.arm)).collect();

    let mut order: Vec<usize> = (0..columns.len())
        .filter(|&j| columns[j].missing_count() > 0)
        .collect();
    order.sort_by_key(|&j| (columns[j].missing_count(), j));

    for _ in 0..iterations {
        for &target in &order {
            impute_column(&mut columns, target, &arm, &mut rng);
        }
    }

    scatter(ds, &columns)
}

fn gather(ds: &TrialDataset) -> Vec<WorkColumn> {
    let schema = ds.schema();
    let recs = ds.records();
    let mut out = Vec::new();
    for (j, spec) in schema.covariates().enumerate() {
        let missing: Vec<bool> = recs.iter().map(|r| r.covariates[j].is_missing()).collect();
        let values = match spec.kind {
            ColumnKind::Numeric => Values::Num(
                recs.iter()
                    .map(|r| r.covariates[j].as_num().unwrap_or(0.0))
                    .collect(),
            ),
            _ => Values::Cat {
                codes: recs
                    .iter()
                    .map(|r| r.covariates[j].as_cat().unwrap_or(0))
                    .collect(),
                levels: spec.categories.len(),
            },
        };
        out.push(WorkColumn {
            name: spec.name.clone(),
            values,
            missing,
        });
    }
    if let Some(spec) = schema.outcome_column() {
        out.push(WorkColumn {
            name: spec.name.clone(),
            values: Values::Cat {
                codes: recs
                    .iter()
                    .map(|r| u32::from(r.outcome.unwrap_or(0)))
                    .collect(),
                levels: 2,
            },
            missing: recs.iter().map(|r| r.outcome.is_none()).collect(),
        });
    }
    out
}

fn scatter(ds: &TrialDataset, columns: &[WorkColumn]) -> Result<TrialDataset> {
    let ncov = ds.schema().covariate_count();
    let mut records = ds.records().to_vec();
    for (i, r) in records.iter_mut().enumerate() {
        for (j, col) in columns.iter().enumerate() {
            if !col.missing[i] {
                continue;
            }
            if j < ncov {
                r.covariates[j] = match &col.values {
                    Values::Num(v) => Cell::Num(v[i]),
                    Values::Cat { codes, .. } => Cell::Cat(codes[i]),
                };
            } else if let Values::Cat { codes, .. } = &col.values {
                r.outcome = Some(codes[i] as u8);
            }
        }
    }
    TrialDataset::new(ds.schema_arc().clone(), records)
}

fn observed_rows(col: &WorkColumn) -> Vec<usize> {
    (0..col.missing.len()).filter(|&i| !col.missing[i]).collect()
}

fn initial_fill(col: &mut WorkColumn, rng: &mut SimRng) {
    let observed = observed_rows(col);
    let missing_rows: Vec<usize> = (0..col.missing.len()).filter(|&i| col.missing[i]).collect();
    for i in missing_rows {
        let donor = observed[rng.random_range(0..observed.len())];
        match &mut col.values {
            Values::Num(v) => v[i] = v[donor],
            Values::Cat { codes, .. } => codes[i] = codes[donor],
        }
    }
}

fn marginal_draw(col: &mut WorkColumn, rng: &mut SimRng) {
    initial_fill(col, rng);
}

/// Design matrix rows for all records: intercept, standardised numeric
/// columns, treatment-coded categories and the arm. Constant columns are dropped.
fn design(columns: &[WorkColumn], target: usize, arm: &[f64], rows: &[usize]) -> Vec<Vec<f64>> {
    let m = arm.len();
    let mut features: Vec<Vec<f64>> = vec![vec![1.0; m]];
    for (j, col) in columns.iter().enumerate() {
        if j == target {
            continue;
        }
        match &col.values {
            Values::Num(v) => {
                let mean = v.iter().sum::<f64>() / m as f64;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
                let sd = var.sqrt();
                let sd = if sd > 0.0 { sd } else { 1.0 };
                features.push(v.iter().map(|x| (x - mean) / sd).collect());
            }
            Values::Cat { codes, levels } => {
                for level in 1..*levels as u32 {
                    features.push(codes.iter().map(|&c| f64::from(c == level)).collect());
                }
            }
        }
    }
    features.push(arm.to_vec());

    // Keep the intercept; drop predictors constant over the fitting rows.
    features
        .into_iter()
        .enumerate()
        .filter(|(k, f)| {
            *k == 0 || {
                let first = f[rows[0]];
                rows.iter().any(|&i| f[i] != first)
            }
        })
        .map(|(_, f)| f)
        .collect()
}

fn matrix(features: &[Vec<f64>], rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), features.len(), |r, c| features[c][rows[r]])
}

fn impute_column(columns: &mut [WorkColumn], target: usize, arm: &[f64], rng: &mut SimRng) {
    let fit_rows = observed_rows(&columns[target]);
    let pred_rows: Vec<usize> = (0..arm.len())
        .filter(|&i| columns[target].missing[i])
        .collect();
    let features = design(columns, target, arm, &fit_rows);
    let x_fit = matrix(&features, &fit_rows);
    let x_pred = matrix(&features, &pred_rows);
    let name = columns[target].name.clone();

    match &mut columns[target].values {
        Values::Num(values) => {
            let y = DVector::from_iterator(fit_rows.len(), fit_rows.iter().map(|&i| values[i]));
            match least_squares(&x_fit, &y) {
                Some(beta) => {
                    let resid = &y - &x_fit * &beta;
                    let dof = fit_rows.len().saturating_sub(beta.len()).max(1);
                    let sigma = (resid.norm_squared() / dof as f64).sqrt();
                    let mean = &x_pred * &beta;
                    for (k, &i) in pred_rows.iter().enumerate() {
                        let z: f64 = StandardNormal.sample(rng);
                        values[i] = mean[k] + sigma * z;
                    }
                }
                None => {
                    log::warn!("imputation of `{name}`: singular design, sampling marginal");
                    marginal_draw(&mut columns[target], rng);
                }
            }
        }
        Values::Cat { codes, levels } => {
            let levels = *levels;
            let probs = category_probabilities(&x_fit, &x_pred, &fit_rows, codes, levels);
            match probs {
                Some(probs) => {
                    for (k, &i) in pred_rows.iter().enumerate() {
                        codes[i] = draw_category(&probs[k], rng);
                    }
                }
                None => {
                    log::warn!(
                        "imputation of `{name}`: logistic fit failed to converge, sampling marginal"
                    );
                    marginal_draw(&mut columns[target], rng);
                }
            }
        }
    }
}

/// Per-prediction-row category probabilities, or `None` if any fit failed.
fn category_probabilities(
    x_fit: &DMatrix<f64>,
    x_pred: &DMatrix<f64>,
    fit_rows: &[usize],
    codes: &[u32],
    levels: usize,
) -> Option<Vec<Vec<f64>>> {
    let npred = x_pred.nrows();
    let present: Vec<bool> = (0..levels as u32)
        .map(|l| fit_rows.iter().any(|&i| codes[i] == l))
        .collect();
    let indicator = |level: u32| {
        DVector::from_iterator(
            fit_rows.len(),
            fit_rows.iter().map(|&i| f64::from(codes[i] == level)),
        )
    };

    if present.iter().filter(|&&p| p).count() == 1 {
        let only = present.iter().position(|&p| p).unwrap();
        let mut p = vec![0.0; levels];
        p[only] = 1.0;
        return Some(vec![p; npred]);
    }

    if levels == 2 {
        let beta = logistic_irls(x_fit, &indicator(1))?;
        let eta = x_pred * beta;
        return Some(
            eta.iter()
                .map(|&e| {
                    let p1 = sigmoid(e);
                    vec![1.0 - p1, p1]
                })
                .collect(),
        );
    }

    let mut out = vec![vec![0.0; levels]; npred];
    for level in 0..levels {
        if !present[level] {
            continue;
        }
        let beta = logistic_irls(x_fit, &indicator(level as u32))?;
        let eta = x_pred * beta;
        for (row, &e) in out.iter_mut().zip(eta.iter()) {
            row[level] = sigmoid(e);
        }
    }
    for row in &mut out {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|p| *p /= total);
        } else {
            let k = present.iter().filter(|&&p| p).count() as f64;
            for (p, &ok) in row.iter_mut().zip(&present) {
                *p = if ok { 1.0 / k } else { 0.0 };
            }
        }
    }
    Some(out)
}

fn draw_category(probs: &[f64], rng: &mut SimRng) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k as u32;
        }
    }
    last as u32
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let chol = xtx.cholesky()?;
    let beta = chol.solve(&xty);
    beta.iter().all(|b| b.is_finite()).then_some(beta)
}

/// Logistic regression coefficients by iteratively reweighted least squares.
/// Returns `None` on a singular system or without convergence.
pub(crate) fn logistic_irls(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let (n, p) = x.shape();
    let mut beta = DVector::zeros(p);
    for _ in 0..IRLS_MAX_ITER {
        let eta = x * &beta;
        let mut xtwx = DMatrix::zeros(p, p);
        let mut xtwz = DVector::zeros(p);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-10);
            let z = eta[i] + (y[i] - mu) / w;
            let row = x.row(i);
            for a in 0..p {
                let wa = w * row[a];
                xtwz[a] += wa * z;
                for b in a..p {
                    xtwx[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let next: DVector<f64> = xtwx.cholesky()?.solve(&xtwz);
        if !next.iter().all(|b| b.is_finite()) {
            return None;
        }
        let change = (&next - &beta).amax();
        beta = next;
        if change < IRLS_TOL {
            return Some(beta);
        }
    }
    None
}
