use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Outcome,
    Arm,
    EnrolmentOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            categories: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn outcome(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Outcome,
            categories: Vec::new(),
        }
    }

    pub fn arm(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Arm,
            categories: Vec::new(),
        }
    }

    pub fn enrolment_order(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::EnrolmentOrder,
            categories: Vec::new(),
        }
    }

    pub fn is_covariate(&self) -> bool {
        matches!(self.kind, ColumnKind::Numeric | ColumnKind::Categorical)
    }

    pub fn category_index(&self, value: &str) -> Option<u32> {
        self.categories
            .iter()
            .position(|c| c == value)
            .map(|i| i as u32)
    }
}

/// Ordered column layout of a trial file plus the tokens read as missing.
///
/// Covariate columns (numeric and categorical) are stored on each record in
/// schema order; the outcome, arm and enrolment columns are held separately.
/// A schema may lack an outcome column until one is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SchemaDoc", into = "SchemaDoc")]
pub struct Schema {
    columns: Vec<ColumnSpec>,
    missing_codes: Vec<String>,
    covariates: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SchemaDoc {
    Full {
        columns: Vec<ColumnSpec>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        missing_codes: Vec<String>,
    },
    Bare(Vec<ColumnSpec>),
}

impl From<SchemaDoc> for Schema {
    fn from(doc: SchemaDoc) -> Self {
        let (columns, missing_codes) = match doc {
            SchemaDoc::Full {
                columns,
                missing_codes,
            } => (columns, missing_codes),
            SchemaDoc::Bare(columns) => (columns, Vec::new()),
        };
        Schema::assemble(columns, missing_codes)
    }
}

impl From<Schema> for SchemaDoc {
    fn from(schema: Schema) -> Self {
        SchemaDoc::Full {
            columns: schema.columns,
            missing_codes: schema.missing_codes,
        }
    }
}

impl Schema {
    fn assemble(columns: Vec<ColumnSpec>, missing_codes: Vec<String>) -> Self {
        let covariates = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_covariate())
            .map(|(i, _)| i)
            .collect();
        Self {
            columns,
            missing_codes,
            covariates,
        }
    }

    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        Self::with_missing_codes(columns, Vec::new())
    }

    pub fn with_missing_codes(columns: Vec<ColumnSpec>, missing_codes: Vec<String>) -> Result<Self> {
        let schema = Self::assemble(columns, missing_codes);
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: Schema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        let mut outcomes = 0;
        let mut arms = 0;
        let mut orders = 0;
        for col in &self.columns {
            if !names.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
            }
            match col.kind {
                ColumnKind::Outcome => outcomes += 1,
                ColumnKind::Arm => arms += 1,
                ColumnKind::EnrolmentOrder => orders += 1,
                ColumnKind::Categorical => {
                    if col.categories.is_empty() {
                        return Err(Error::Schema(format!(
                            "categorical column `{}` has no categories",
                            col.name
                        )));
                    }
                    let mut seen = HashSet::new();
                    for cat in &col.categories {
                        if !seen.insert(cat.as_str()) {
                            return Err(Error::Schema(format!(
                                "column `{}` lists category `{cat}` twice",
                                col.name
                            )));
                        }
                        if self.is_missing_token(cat) {
                            return Err(Error::Schema(format!(
                                "column `{}` category `{cat}` collides with a missing code",
                                col.name
                            )));
                        }
                    }
                }
                ColumnKind::Numeric => {}
            }
            if col.kind != ColumnKind::Categorical && !col.categories.is_empty() {
                return Err(Error::Schema(format!(
                    "only categorical columns may list categories (`{}`)",
                    col.name
                )));
            }
        }
        if outcomes > 1 {
            return Err(Error::Schema("more than one outcome column".into()));
        }
        if arms != 1 {
            return Err(Error::Schema(format!("expected one arm column, found {arms}")));
        }
        if orders != 1 {
            return Err(Error::Schema(format!(
                "expected one enrolment_order column, found {orders}"
            )));
        }
        Ok(())
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn missing_codes(&self) -> &[String] {
        &self.missing_codes
    }

    pub fn is_missing_token(&self, raw: &str) -> bool {
        raw.is_empty() || self.missing_codes.iter().any(|m| m == raw)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Covariate specs in record order.
    pub fn covariates(&self) -> impl ExactSizeIterator<Item = &ColumnSpec> + '_ {
        self.covariates.iter().map(move |&i| &self.columns[i])
    }

    pub fn covariate_count(&self) -> usize {
        self.covariates.len()
    }

    /// Position of a named covariate within `PatientRecord::covariates`.
    pub fn covariate_position(&self, name: &str) -> Option<usize> {
        self.covariates
            .iter()
            .position(|&i| self.columns[i].name == name)
    }

    pub fn outcome_column(&self) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.kind == ColumnKind::Outcome)
    }

    pub fn has_outcome(&self) -> bool {
        self.outcome_column().is_some()
    }

    pub fn arm_column(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::Arm)
            .expect("validated schema has an arm column")
    }

    pub fn enrolment_column(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::EnrolmentOrder)
            .expect("validated schema has an enrolment_order column")
    }

    pub fn require_outcome(&self) -> Result<&ColumnSpec> {
        self.outcome_column()
            .ok_or_else(|| Error::Schema("schema has no outcome column".into()))
    }

    pub(crate) fn replace_columns(&self, columns: Vec<ColumnSpec>) -> Result<Self> {
        Self::with_missing_codes(columns, self.missing_codes.clone())
    }
}
