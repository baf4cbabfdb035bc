//! CSV reading and writing against a [`Schema`].

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::data::dataset::{Cell, PatientRecord, TrialDataset};
use crate::data::schema::{ColumnKind, Schema};
use crate::error::{Error, Result};

pub fn load_csv(path: &Path, schema: Arc<Schema>) -> Result<TrialDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let records = read_records(file, &schema)?;
    TrialDataset::new(schema, records)
}

/// Parses every row; an empty data section yields an empty vector.
pub fn read_records<R: Read>(reader: R, schema: &Schema) -> Result<Vec<PatientRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();

    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for (pos, name) in header.iter().enumerate() {
        if by_name.insert(name, pos).is_some() {
            return Err(Error::DuplicateHeader(name.to_string()));
        }
    }
    if let Some(extra) = header.iter().find(|h| schema.column(h).is_none()) {
        return Err(Error::SchemaMismatch(format!(
            "header column `{extra}` is not in the schema"
        )));
    }
    let positions = schema
        .columns()
        .iter()
        .map(|c| {
            by_name.get(c.name.as_str()).copied().ok_or_else(|| {
                Error::SchemaMismatch(format!("schema column `{}` missing from header", c.name))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let mut record = PatientRecord {
            covariates: Vec::with_capacity(schema.covariate_count()),
            outcome: None,
            arm: 0,
            enrolment: 0.0,
            enrolment_rank: 0,
        };
        for (spec, &pos) in schema.columns().iter().zip(&positions) {
            let raw = row.get(pos).unwrap_or("");
            let missing = schema.is_missing_token(raw);
            let cell_err = |message: String| Error::Cell {
                row: row_no,
                column: spec.name.clone(),
                message,
            };
            match spec.kind {
                ColumnKind::Numeric => {
                    let cell = if missing {
                        Cell::Missing
                    } else {
                        match raw.parse::<f64>() {
                            Ok(x) if x.is_finite() => Cell::Num(x),
                            _ => return Err(cell_err(format!("`{raw}` is not a finite number"))),
                        }
                    };
                    record.covariates.push(cell);
                }
                ColumnKind::Categorical => {
                    let cell = if missing {
                        Cell::Missing
                    } else {
                        match spec.category_index(raw) {
                            Some(c) => Cell::Cat(c),
                            None => {
                                return Err(cell_err(format!(
                                    "category `{raw}` is not one of {:?}",
                                    spec.categories
                                )))
                            }
                        }
                    };
                    record.covariates.push(cell);
                }
                ColumnKind::Outcome => {
                    record.outcome = if missing {
                        None
                    } else {
                        Some(parse_binary(raw).ok_or_else(|| {
                            cell_err(format!("outcome `{raw}` is not 0 or 1"))
                        })?)
                    };
                }
                ColumnKind::Arm => {
                    if missing {
                        return Err(cell_err("arm is missing".into()));
                    }
                    record.arm = parse_binary(raw)
                        .ok_or_else(|| cell_err(format!("arm `{raw}` is not 0 or 1")))?;
                }
                ColumnKind::EnrolmentOrder => {
                    if missing {
                        return Err(cell_err("enrolment order is missing".into()));
                    }
                    record.enrolment = match raw.parse::<f64>() {
                        Ok(x) if x.is_finite() => x,
                        _ => return Err(cell_err(format!("`{raw}` is not a number"))),
                    };
                }
            }
        }
        out.push(record);
    }
    Ok(out)
}

fn parse_binary(raw: &str) -> Option<u8> {
    match raw {
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

pub fn write_csv(path: &Path, schema: &Schema, records: &[PatientRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(std::io::BufWriter::new(file), schema, records)
}

/// Writes the header in schema order and one row per record. Missing cells
/// are written as the schema's first missing code, or empty.
pub fn write_records<W: Write>(writer: W, schema: &Schema, records: &[PatientRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(schema.columns().iter().map(|c| c.name.as_str()))?;
    let missing = schema.missing_codes().first().cloned().unwrap_or_default();
    let mut row: Vec<String> = Vec::with_capacity(schema.columns().len());
    for r in records {
        row.clear();
        let mut cov = r.covariates.iter();
        for spec in schema.columns() {
            let text = match spec.kind {
                ColumnKind::Numeric | ColumnKind::Categorical => {
                    match cov.next().copied().unwrap_or(Cell::Missing) {
                        Cell::Num(x) => x.to_string(),
                        Cell::Cat(c) => spec.categories[c as usize].clone(),
                        Cell::Missing => missing.clone(),
                    }
                }
                ColumnKind::Outcome => match r.outcome {
                    Some(y) => y.to_string(),
                    None => missing.clone(),
                },
                ColumnKind::Arm => r.arm.to_string(),
                ColumnKind::EnrolmentOrder => r.enrolment.to_string(),
            };
            row.push(text);
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
