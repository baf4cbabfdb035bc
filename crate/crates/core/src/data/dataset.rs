use std::sync::Arc;

use crate::data::schema::{ColumnKind, Schema};
use crate::error::{Error, Result};

/// A covariate value. Categories are indices into the column's category list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Cat(u32),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_num(&self) -> Option<f64> {
        match *self {
            Cell::Num(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_cat(&self) -> Option<u32> {
        match *self {
            Cell::Cat(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    /// One cell per covariate column, in schema order.
    pub covariates: Vec<Cell>,
    /// `None` while the outcome is missing or not yet derived.
    pub outcome: Option<u8>,
    pub arm: u8,
    /// Raw value of the enrolment column.
    pub enrolment: f64,
    /// Position of the patient in enrolment order across the whole trial.
    pub enrolment_rank: usize,
}

impl PatientRecord {
    pub fn has_missing(&self) -> bool {
        self.outcome.is_none() || self.covariates.iter().any(Cell::is_missing)
    }
}

/// Checks a record against the schema's kinds and category lists.
pub fn validate_record(schema: &Schema, record: &PatientRecord) -> Result<()> {
    if record.covariates.len() != schema.covariate_count() {
        return Err(Error::SchemaMismatch(format!(
            "record has {} covariates, schema has {}",
            record.covariates.len(),
            schema.covariate_count()
        )));
    }
    for (spec, cell) in schema.covariates().zip(&record.covariates) {
        let ok = match (spec.kind, cell) {
            (_, Cell::Missing) => true,
            (ColumnKind::Numeric, Cell::Num(x)) => x.is_finite(),
            (ColumnKind::Categorical, Cell::Cat(c)) => (*c as usize) < spec.categories.len(),
            _ => false,
        };
        if !ok {
            return Err(Error::SchemaMismatch(format!(
                "value {cell:?} does not conform to column `{}`",
                spec.name
            )));
        }
    }
    if record.arm > 1 {
        return Err(Error::SchemaMismatch(format!("arm value {}", record.arm)));
    }
    if let Some(y) = record.outcome {
        if y > 1 {
            return Err(Error::SchemaMismatch(format!("outcome value {y}")));
        }
        if !schema.has_outcome() {
            return Err(Error::SchemaMismatch(
                "record carries an outcome but schema has no outcome column".into(),
            ));
        }
    }
    Ok(())
}

/// Trial data: records of both arms with enrolment ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    schema: Arc<Schema>,
    records: Vec<PatientRecord>,
    control: Vec<usize>,
    treated: Vec<usize>,
}

impl TrialDataset {
    /// Builds a dataset and assigns `enrolment_rank` from the enrolment column,
    /// ties broken by record position.
    pub fn new(schema: Arc<Schema>, mut records: Vec<PatientRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::NoRecords);
        }
        for r in &records {
            validate_record(&schema, r)?;
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| {
            records[a]
                .enrolment
                .total_cmp(&records[b].enrolment)
                .then(a.cmp(&b))
        });
        for (rank, &i) in order.iter().enumerate() {
            records[i].enrolment_rank = rank;
        }
        let (control, treated) = (0..records.len()).partition(|&i| records[i].arm == 0);
        Ok(Self {
            schema,
            records,
            control,
            treated,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn m(&self) -> usize {
        self.records.len()
    }

    pub fn m0(&self) -> usize {
        self.control.len()
    }

    pub fn m1(&self) -> usize {
        self.treated.len()
    }

    /// Record positions of the control arm, in record order.
    pub fn control_indices(&self) -> &[usize] {
        &self.control
    }

    pub fn treated_indices(&self) -> &[usize] {
        &self.treated
    }

    pub fn control_records(&self) -> impl ExactSizeIterator<Item = &PatientRecord> + '_ {
        self.control.iter().map(move |&i| &self.records[i])
    }

    pub fn treated_records(&self) -> impl ExactSizeIterator<Item = &PatientRecord> + '_ {
        self.treated.iter().map(move |&i| &self.records[i])
    }

    pub fn has_missing(&self) -> bool {
        self.records.iter().any(|r| {
            r.covariates.iter().any(Cell::is_missing)
                || (self.schema.has_outcome() && r.outcome.is_none())
        })
    }

    /// Outcomes of one arm; fails if any is missing.
    pub fn arm_outcomes(&self, arm: u8) -> Result<Vec<u8>> {
        let outcome = self.schema.require_outcome()?;
        let idx = if arm == 0 { &self.control } else { &self.treated };
        idx.iter()
            .map(|&i| {
                self.records[i]
                    .outcome
                    .ok_or_else(|| Error::MissingValues(outcome.name.clone()))
            })
            .collect()
    }

    /// Resolves control-arm indices into owned training records.
    pub fn resolve(&self, set: &TrainingSet) -> Result<TrainingData> {
        let records = set
            .indices()
            .iter()
            .map(|&j| {
                self.control
                    .get(j)
                    .map(|&i| self.records[i].clone())
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!("control index {j} out of range"))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingData::new(self.schema.clone(), records, self.m()))
    }
}

/// Selection of distinct control-arm patients, as indices into the control arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    indices: Vec<usize>,
}

impl TrainingSet {
    /// Fails unless `indices` are distinct and below `m0`.
    pub fn new(indices: Vec<usize>, m0: usize) -> Result<Self> {
        let mut seen = vec![false; m0];
        for &i in &indices {
            if i >= m0 {
                return Err(Error::InvalidArgument(format!(
                    "control index {i} out of range (m0 = {m0})"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("control index {i} repeated")));
            }
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }
}

/// Owned training records handed to a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub schema: Arc<Schema>,
    pub records: Vec<PatientRecord>,
    /// First enrolment rank given to generated patients.
    pub rank_offset: usize,
}

impl TrainingData {
    pub fn new(schema: Arc<Schema>, records: Vec<PatientRecord>, rank_offset: usize) -> Self {
        Self {
            schema,
            records,
            rank_offset,
        }
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn outcomes(&self) -> Result<Vec<u8>> {
        let name = &self.schema.require_outcome()?.name;
        self.records
            .iter()
            .map(|r| r.outcome.ok_or_else(|| Error::MissingValues(name.clone())))
            .collect()
    }

    /// Errors if any covariate or the outcome is missing.
    pub fn require_complete(&self) -> Result<()> {
        let outcome = self.schema.require_outcome()?;
        for r in &self.records {
            if r.outcome.is_none() {
                return Err(Error::MissingValues(outcome.name.clone()));
            }
            if let Some(j) = r.covariates.iter().position(Cell::is_missing) {
                let name = self.schema.covariates().nth(j).map(|c| c.name.clone());
                return Err(Error::MissingValues(name.unwrap_or_default()));
            }
        }
        Ok(())
    }
}
