//! Column-shape and column-pair similarity scores between a real and a
//! synthetic table, and their mean as a general quality score.
//!
//! Every score lies in `[0, 1]` with 1 meaning identical distributions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{Cell, ColumnKind, PatientRecord, Schema};
use crate::error::{Error, Result};

/// Equal-width bins used for the numeric side of mixed pairs.
pub const MIXED_PAIR_BINS: usize = 10;

fn non_empty<T>(real: &[T], syn: &[T]) -> Result<()> {
    if real.is_empty() || syn.is_empty() {
        return Err(Error::InvalidArgument("fidelity metric on empty input".into()));
    }
    Ok(())
}

/// `1 − sup_x |F_real(x) − F_syn(x)|`.
pub fn ks_complement(real: &[f64], syn: &[f64]) -> Result<f64> {
    non_empty(real, syn)?;
    let mut a = real.to_vec();
    let mut b = syn.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() || j < b.len() {
        // Advance past every value equal to the next smallest point.
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(1.0 - sup)
}

fn frequencies<T: Ord + Clone>(values: &[T]) -> BTreeMap<T, f64> {
    let mut map = BTreeMap::new();
    let w = 1.0 / values.len() as f64;
    for v in values {
        *map.entry(v.clone()).or_insert(0.0) += w;
    }
    map
}

fn tv_distance<T: Ord>(p: &BTreeMap<T, f64>, q: &BTreeMap<T, f64>) -> f64 {
    // Sum over the sorted union of keys so the result is symmetric bit-for-bit.
    let keys: BTreeSet<&T> = p.keys().chain(q.keys()).collect();
    let total: f64 = keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum();
    (0.5 * total).min(1.0)
}

/// `1 − ½ Σ_c |p_real(c) − p_syn(c)|` over the union of observed categories.
pub fn tv_complement<T: Ord + Clone>(real: &[T], syn: &[T]) -> Result<f64> {
    non_empty(real, syn)?;
    Ok(1.0 - tv_distance(&frequencies(real), &frequencies(syn)))
}

/// Cell-wise total-variation complement of the two joint frequency tables.
pub fn contingency_similarity<A: Ord + Clone, B: Ord + Clone>(
    real: (&[A], &[B]),
    syn: (&[A], &[B]),
) -> Result<f64> {
    if real.0.len() != real.1.len() || syn.0.len() != syn.1.len() {
        return Err(Error::InvalidArgument("pair columns differ in length".into()));
    }
    let joint = |x: &[A], y: &[B]| -> Vec<(A, B)> {
        x.iter().cloned().zip(y.iter().cloned()).collect()
    };
    tv_complement(&joint(real.0, real.1), &joint(syn.0, syn.1))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `1 − |ρ_real − ρ_syn| / 2`; `None` if any column has zero variance.
pub fn pearson_similarity(real: (&[f64], &[f64]), syn: (&[f64], &[f64])) -> Result<Option<f64>> {
    non_empty(real.0, syn.0)?;
    if real.0.len() != real.1.len() || syn.0.len() != syn.1.len() {
        return Err(Error::InvalidArgument("pair columns differ in length".into()));
    }
    Ok(match (pearson(real.0, real.1), pearson(syn.0, syn.1)) {
        (Some(a), Some(b)) => Some(1.0 - (a - b).abs() / 2.0),
        _ => None,
    })
}

/// Equal-width bins over a reference range; out-of-range values clamp to the
/// edge bins and a bin's lower edge belongs to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl Binning {
    pub fn fit(reference: &[f64], bins: usize) -> Result<Self> {
        if bins < 1 {
            return Err(Error::InvalidArgument("bins must be at least 1".into()));
        }
        if reference.is_empty() {
            return Err(Error::InvalidArgument("cannot bin an empty column".into()));
        }
        let min = reference.iter().copied().fold(f64::INFINITY, f64::min);
        let max = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { min, max, bins })
    }

    pub fn bin(&self, x: f64) -> u32 {
        let width = (self.max - self.min) / self.bins as f64;
        if width <= 0.0 {
            return 0;
        }
        let raw = ((x - self.min) / width).floor();
        raw.clamp(0.0, (self.bins - 1) as f64) as u32
    }

    pub fn apply(&self, values: &[f64]) -> Vec<u32> {
        values.iter().map(|&x| self.bin(x)).collect()
    }
}

/// Bins a column over its own range.
pub fn discretize(col: &[f64], bins: usize) -> Result<Vec<u32>> {
    Ok(Binning::fit(col, bins)?.apply(col))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScore {
    pub column: String,
    pub metric: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub left: String,
    pub right: String,
    pub metric: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub left: String,
    pub right: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub overall: f64,
    pub column_scores: Vec<ColumnScore>,
    pub pair_scores: Vec<PairScore>,
    pub skipped_pairs: Vec<SkippedPair>,
}

impl QualityReport {
    /// Assembles a report whose overall score is the unweighted mean of every
    /// listed column and pair score.
    pub fn from_scores(
        column_scores: Vec<ColumnScore>,
        pair_scores: Vec<PairScore>,
        skipped_pairs: Vec<SkippedPair>,
    ) -> Result<Self> {
        let count = column_scores.len() + pair_scores.len();
        if count == 0 {
            return Err(Error::InvalidArgument("no scores to average".into()));
        }
        let total: f64 = column_scores.iter().map(|c| c.score).sum::<f64>()
            + pair_scores.iter().map(|p| p.score).sum::<f64>();
        Ok(Self {
            overall: total / count as f64,
            column_scores,
            pair_scores,
            skipped_pairs,
        })
    }
}

enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
}

/// Scored columns: covariates, then outcome and arm as binary categoricals.
fn columns_of(schema: &Schema, records: &[PatientRecord]) -> Result<Vec<(String, Column)>> {
    let mut out = Vec::new();
    for (j, spec) in schema.covariates().enumerate() {
        let missing = || Error::MissingValues(spec.name.clone());
        let col = match spec.kind {
            ColumnKind::Numeric => Column::Numeric(
                records
                    .iter()
                    .map(|r| r.covariates[j].as_num().ok_or_else(missing))
                    .collect::<Result<_>>()?,
            ),
            _ => Column::Categorical(
                records
                    .iter()
                    .map(|r| match r.covariates[j] {
                        Cell::Cat(c) => Ok(c),
                        _ => Err(missing()),
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        out.push((spec.name.clone(), col));
    }
    if let Some(spec) = schema.outcome_column() {
        let ys = records
            .iter()
            .map(|r| {
                r.outcome
                    .map(u32::from)
                    .ok_or_else(|| Error::MissingValues(spec.name.clone()))
            })
            .collect::<Result<_>>()?;
        out.push((spec.name.clone(), Column::Categorical(ys)));
    }
    out.push((
        schema.arm_column().name.clone(),
        Column::Categorical(records.iter().map(|r| u32::from(r.arm)).collect()),
    ));
    Ok(out)
}

/// General quality score of `syn` against `real`.
pub fn general_score(
    schema: &Schema,
    real: &[PatientRecord],
    syn_schema: &Schema,
    syn: &[PatientRecord],
) -> Result<QualityReport> {
    if schema.columns() != syn_schema.columns() {
        return Err(Error::SchemaMismatch(
            "real and synthetic data use different schemas".into(),
        ));
    }
    if real.is_empty() || syn.is_empty() {
        return Err(Error::InvalidArgument("fidelity metric on empty input".into()));
    }
    let rc = columns_of(schema, real)?;
    let sc = columns_of(schema, syn)?;

    let mut column_scores = Vec::with_capacity(rc.len());
    for ((name, r), (_, s)) in rc.iter().zip(&sc) {
        let (metric, score) = match (r, s) {
            (Column::Numeric(a), Column::Numeric(b)) => ("ks_complement", ks_complement(a, b)?),
            (Column::Categorical(a), Column::Categorical(b)) => {
                ("tv_complement", tv_complement(a, b)?)
            }
            _ => unreachable!("same schema"),
        };
        column_scores.push(ColumnScore {
            column: name.clone(),
            metric: metric.into(),
            score,
        });
    }

    let mut pair_scores = Vec::new();
    let mut skipped_pairs = Vec::new();
    for a in 0..rc.len() {
        for b in a + 1..rc.len() {
            let (left, right) = (rc[a].0.clone(), rc[b].0.clone());
            let scored = match ((&rc[a].1, &rc[b].1), (&sc[a].1, &sc[b].1)) {
                (
                    (Column::Numeric(ra), Column::Numeric(rb)),
                    (Column::Numeric(sa), Column::Numeric(sb)),
                ) => pearson_similarity((ra, rb), (sa, sb))?.map(|v| ("pearson_similarity", v)),
                (
                    (Column::Categorical(ra), Column::Categorical(rb)),
                    (Column::Categorical(sa), Column::Categorical(sb)),
                ) => Some((
                    "contingency_similarity",
                    contingency_similarity((ra, rb), (sa, sb))?,
                )),
                (
                    (Column::Numeric(ra), Column::Categorical(rb)),
                    (Column::Numeric(sa), Column::Categorical(sb)),
                ) => {
                    let bins = Binning::fit(ra, MIXED_PAIR_BINS)?;
                    Some((
                        "contingency_similarity",
                        contingency_similarity(
                            (&bins.apply(ra), rb),
                            (&bins.apply(sa), sb),
                        )?,
                    ))
                }
                (
                    (Column::Categorical(ra), Column::Numeric(rb)),
                    (Column::Categorical(sa), Column::Numeric(sb)),
                ) => {
                    let bins = Binning::fit(rb, MIXED_PAIR_BINS)?;
                    Some((
                        "contingency_similarity",
                        contingency_similarity(
                            (ra, &bins.apply(rb)),
                            (sa, &bins.apply(sb)),
                        )?,
                    ))
                }
                _ => unreachable!("same schema"),
            };
            match scored {
                Some((metric, score)) => pair_scores.push(PairScore {
                    left,
                    right,
                    metric: metric.into(),
                    score,
                }),
                None => skipped_pairs.push(SkippedPair {
                    left,
                    right,
                    reason: "zero variance".into(),
                }),
            }
        }
    }
    QualityReport::from_scores(column_scores, pair_scores, skipped_pairs)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::ColumnSpec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ks_cases() {
        assert_eq!(ks_complement(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(ks_complement(&[0.0; 4], &[1.0; 3]).unwrap(), 0.0);
        assert_eq!(ks_complement(&[0.0, 1.0], &[0.0, 2.0]).unwrap(), 0.5);
        assert!(ks_complement(&[], &[1.0]).is_err());
    }

    #[test]
    fn tv_cases() {
        assert_eq!(tv_complement(&[1, 2, 2], &[2, 1, 2]).unwrap(), 1.0);
        assert_eq!(tv_complement(&["a", "b"], &["a", "a"]).unwrap(), 0.5);
        assert_eq!(tv_complement(&["a", "b"], &["c", "d"]).unwrap(), 0.0);
        assert!(tv_complement::<u32>(&[], &[1]).is_err());
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        let neg = [8.0, 6.0, 4.0, 2.0];
        assert_eq!(pearson_similarity((&x, &y), (&x, &y)).unwrap(), Some(1.0));
        assert_eq!(pearson_similarity((&x, &y), (&x, &neg)).unwrap(), Some(0.0));
        assert_eq!(pearson_similarity((&x, &[1.0; 4]), (&x, &y)).unwrap(), None);
    }

    #[test]
    fn pearson_formula_point() {
        // ρ_real = 0.8, ρ_syn = 0.4 constructed from orthogonal centred bases.
        let u = [1.0, -1.0, 1.0, -1.0];
        let v = [1.0, 1.0, -1.0, -1.0];
        let mk = |rho: f64| -> Vec<f64> {
            u.iter()
                .zip(&v)
                .map(|(a, b)| rho * a + (1.0 - rho * rho).sqrt() * b)
                .collect()
        };
        let (ra, sa) = (mk(0.8), mk(0.4));
        let s = pearson_similarity((&u, &ra), (&u, &sa)).unwrap().unwrap();
        assert_abs_diff_eq!(s, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn contingency_cases() {
        let a = ["a", "b"];
        let x = ["x", "y"];
        assert_eq!(contingency_similarity((&a, &x), (&a, &x)).unwrap(), 1.0);
        assert_eq!(
            contingency_similarity((&["a"][..], &["x"][..]), (&["b"][..], &["y"][..])).unwrap(),
            0.0
        );
        assert_eq!(
            contingency_similarity((&["a", "a"][..], &["x", "y"][..]), (&["a"][..], &["x"][..]))
                .unwrap(),
            0.5
        );
    }

    #[test]
    fn discretize_cases() {
        assert_eq!(discretize(&[0.0, 5.0, 10.0], 2).unwrap(), vec![0, 1, 1]);
        assert_eq!(discretize(&[3.0, 3.0, 3.0], 4).unwrap(), vec![0, 0, 0]);
        let b = Binning::fit(&[0.0, 10.0], 10).unwrap();
        assert_eq!(b.bin(12.0), 9);
        assert_eq!(b.bin(-1.0), 0);
        assert!(discretize(&[1.0], 0).is_err());
    }

    #[test]
    fn overall_is_mean_of_listed_scores() {
        let cols = vec![
            ColumnScore { column: "a".into(), metric: "m".into(), score: 0.8 },
            ColumnScore { column: "b".into(), metric: "m".into(), score: 0.6 },
        ];
        let pairs = vec![PairScore {
            left: "a".into(),
            right: "b".into(),
            metric: "m".into(),
            score: 0.7,
        }];
        let r = QualityReport::from_scores(cols, pairs, vec![]).unwrap();
        assert_abs_diff_eq!(r.overall, 0.7, epsilon = 1e-12);
    }

    fn records(rows: &[(f64, f64, u32, u8)]) -> Vec<PatientRecord> {
        rows.iter()
            .enumerate()
            .map(|(i, &(x, z, c, y))| PatientRecord {
                covariates: vec![Cell::Num(x), Cell::Num(z), Cell::Cat(c)],
                outcome: Some(y),
                arm: 0,
                enrolment: i as f64,
                enrolment_rank: i,
            })
            .collect()
    }

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(vec![
                ColumnSpec::numeric("x"),
                ColumnSpec::numeric("z"),
                ColumnSpec::categorical("c", ["p", "q", "r"]),
                ColumnSpec::outcome("y"),
                ColumnSpec::arm("arm"),
                ColumnSpec::enrolment_order("order"),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn general_score_identity_and_layout() {
        let real = records(&[(1.0, 2.0, 0, 1), (2.0, 1.0, 1, 0), (3.0, 5.0, 2, 1)]);
        let s = schema();
        let report = general_score(&s, &real, &s, &real).unwrap();
        assert_eq!(report.overall, 1.0);
        // x, z, c, y, arm: 5 columns and 10 pairs; every pair with the
        // constant arm column is still scored (contingency), none skipped.
        assert_eq!(report.column_scores.len(), 5);
        assert_eq!(report.pair_scores.len() + report.skipped_pairs.len(), 10);
        let json = serde_json::to_string(&report).unwrap();
        let back: QualityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn general_score_skips_zero_variance_pearson() {
        let real = records(&[(1.0, 2.0, 0, 1), (2.0, 2.0, 1, 0), (3.0, 2.0, 2, 1)]);
        let syn = records(&[(1.0, 2.0, 0, 1), (1.5, 3.0, 1, 1)]);
        let s = schema();
        let report = general_score(&s, &real, &s, &syn).unwrap();
        assert_eq!(report.skipped_pairs.len(), 1);
        assert_eq!(report.skipped_pairs[0].left, "x");
        let listed: Vec<f64> = report
            .column_scores
            .iter()
            .map(|c| c.score)
            .chain(report.pair_scores.iter().map(|p| p.score))
            .collect();
        let mean = listed.iter().sum::<f64>() / listed.len() as f64;
        assert!((report.overall - mean).abs() <= 1e-12);
    }

    #[test]
    fn general_score_schema_mismatch() {
        let real = records(&[(1.0, 2.0, 0, 1)]);
        let other = Schema::new(vec![
            ColumnSpec::numeric("x"),
            ColumnSpec::outcome("y"),
            ColumnSpec::arm("arm"),
            ColumnSpec::enrolment_order("order"),
        ])
        .unwrap();
        assert!(matches!(
            general_score(&schema(), &real, &other, &real),
            Err(Error::SchemaMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn scores_bounded_and_symmetric(
            a in prop::collection::vec(0u32..5, 1..40),
            b in prop::collection::vec(0u32..5, 1..40),
            x in prop::collection::vec(-5.0f64..5.0, 1..40),
            y in prop::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            let tv = tv_complement(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&tv));
            prop_assert_eq!(tv, tv_complement(&b, &a).unwrap());
            prop_assert_eq!(tv_complement(&a, &a).unwrap(), 1.0);

            let ks = ks_complement(&x, &y).unwrap();
            prop_assert!((0.0..=1.0).contains(&ks));
            prop_assert_eq!(ks_complement(&x, &x).unwrap(), 1.0);

            let n = a.len().min(b.len());
            let c1 = contingency_similarity((&a[..n], &b[..n]), (&b[..n], &a[..n])).unwrap();
            let c2 = contingency_similarity((&b[..n], &a[..n]), (&a[..n], &b[..n])).unwrap();
            prop_assert!((0.0..=1.0).contains(&c1));
            prop_assert_eq!(c1, c2);
        }

        #[test]
        fn tv_monotone_in_distance(k in 0usize..=10) {
            // Moving k of 10 masses from category 0 to 1 increases TV by k/10.
            let real = vec![0u32; 10];
            let mut syn = vec![0u32; 10];
            for v in syn.iter_mut().take(k) { *v = 1; }
            let mut syn_more = syn.clone();
            if k < 10 { syn_more[k] = 1; }
            prop_assert!(tv_complement(&real, &syn_more).unwrap() <= tv_complement(&real, &syn).unwrap());
            prop_assert!((tv_complement(&real, &syn).unwrap() - (1.0 - k as f64 / 10.0)).abs() < 1e-12);
        }
    }
}
