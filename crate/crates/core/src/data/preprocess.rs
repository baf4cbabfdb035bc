//! Outcome derivation and category recoding.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::dataset::{Cell, TrialDataset};
use crate::data::schema::{ColumnKind, ColumnSpec};
use crate::error::{Error, Result};

/// Matches one categorical cell: a category name, any value (`"*"`), or missing (`null`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Any,
    Missing,
    Value(String),
}

impl Pattern {
    fn matches(&self, value: Option<&str>) -> bool {
        match (self, value) {
            (Pattern::Any, _) => true,
            (Pattern::Missing, None) => true,
            (Pattern::Value(p), Some(v)) => p == v,
            _ => false,
        }
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match Option::<String>::deserialize(d)? {
            None => Pattern::Missing,
            Some(s) if s == "*" => Pattern::Any,
            Some(s) => Pattern::Value(s),
        })
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Pattern::Any => s.serialize_str("*"),
            Pattern::Missing => s.serialize_none(),
            Pattern::Value(v) => s.serialize_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCase {
    pub a: Pattern,
    pub b: Pattern,
    /// `None` marks the outcome missing (left for imputation).
    pub outcome: Option<u8>,
}

/// Truth table from two categorical columns to a binary outcome; first match wins.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeRule {
    pub cases: Vec<OutcomeCase>,
}

impl OutcomeRule {
    pub fn apply(&self, a: Option<&str>, b: Option<&str>) -> Option<Option<u8>> {
        self.cases
            .iter()
            .find(|c| c.a.matches(a) && c.b.matches(b))
            .map(|c| c.outcome)
    }
}

fn categorical_position(ds: &TrialDataset, name: &str) -> Result<(usize, ColumnSpec)> {
    let spec = ds
        .schema()
        .column(name)
        .ok_or_else(|| Error::InvalidArgument(format!("no column `{name}`")))?;
    if spec.kind != ColumnKind::Categorical {
        return Err(Error::InvalidArgument(format!(
            "column `{name}` is not categorical"
        )));
    }
    let pos = ds.schema().covariate_position(name).expect("covariate");
    Ok((pos, spec.clone()))
}

fn label(spec: &ColumnSpec, cell: Cell) -> Option<&str> {
    cell.as_cat().map(|c| spec.categories[c as usize].as_str())
}

/// Replaces the outcome with `rule(col_a, col_b)` and drops both source columns.
pub fn derive_binary_outcome(
    ds: &TrialDataset,
    col_a: &str,
    col_b: &str,
    outcome_name: &str,
    rule: &OutcomeRule,
) -> Result<TrialDataset> {
    if col_a == col_b {
        return Err(Error::InvalidArgument("source columns must differ".into()));
    }
    let (pos_a, spec_a) = categorical_position(ds, col_a)?;
    let (pos_b, spec_b) = categorical_position(ds, col_b)?;

    let mut columns = Vec::with_capacity(ds.schema().columns().len());
    for c in ds.schema().columns() {
        if c.name == col_a {
            columns.push(ColumnSpec::outcome(outcome_name));
        } else if c.name != col_b && c.kind != ColumnKind::Outcome {
            columns.push(c.clone());
        }
    }
    let schema = Arc::new(ds.schema().replace_columns(columns)?);

    let mut records = ds.records().to_vec();
    for r in &mut records {
        let a = label(&spec_a, r.covariates[pos_a]);
        let b = label(&spec_b, r.covariates[pos_b]);
        r.outcome = rule.apply(a, b).ok_or_else(|| {
            Error::IncompleteRule(format!(
                "({col_a}={}, {col_b}={})",
                a.unwrap_or("<missing>"),
                b.unwrap_or("<missing>")
            ))
        })?;
        r.covariates = r
            .covariates
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != pos_a && j != pos_b)
            .map(|(_, c)| *c)
            .collect();
    }
    TrialDataset::new(schema, records)
}

/// Maps a categorical column through `mapping`, merging categories with the
/// same image. Declared categories that are neither observed nor mapped are dropped.
pub fn recode_categories(
    ds: &TrialDataset,
    column: &str,
    mapping: &BTreeMap<String, String>,
) -> Result<TrialDataset> {
    let (pos, spec) = categorical_position(ds, column)?;

    let observed: HashSet<u32> = ds
        .records()
        .iter()
        .filter_map(|r| r.covariates[pos].as_cat())
        .collect();
    let mut new_categories: Vec<String> = Vec::new();
    let mut remap: Vec<Option<u32>> = vec![None; spec.categories.len()];
    for (old, name) in spec.categories.iter().enumerate() {
        match mapping.get(name) {
            Some(image) => {
                let idx = match new_categories.iter().position(|c| c == image) {
                    Some(i) => i,
                    None => {
                        new_categories.push(image.clone());
                        new_categories.len() - 1
                    }
                };
                remap[old] = Some(idx as u32);
            }
            None if observed.contains(&(old as u32)) => {
                return Err(Error::IncompleteRule(format!(
                    "column `{column}`: category `{name}` has no mapping"
                )));
            }
            None => {}
        }
    }
    if new_categories.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "recoding leaves column `{column}` without categories"
        )));
    }

    let columns = ds
        .schema()
        .columns()
        .iter()
        .map(|c| {
            if c.name == column {
                ColumnSpec::categorical(column, new_categories.clone())
            } else {
                c.clone()
            }
        })
        .collect();
    let schema = Arc::new(ds.schema().replace_columns(columns)?);

    let mut records = ds.records().to_vec();
    for r in &mut records {
        if let Cell::Cat(c) = r.covariates[pos] {
            r.covariates[pos] = Cell::Cat(remap[c as usize].expect("observed categories are mapped"));
        }
    }
    TrialDataset::new(schema, records)
}
