//! Client side of the subprocess generator protocol:
//!
//! ```text
//! <exe> fit --train <csv> --schema <json> --model-dir <dir> --seed <u64>
//! <exe> sample --model-dir <dir> --n <s> --seed <u64> --out <csv>
//! ```
//!
//! Hyperparameters are written to `<model-dir>/hyperparams.json` before `fit`.
//! Any nonzero exit, malformed CSV, out-of-schema value or wrong row count is
//! an [`ExternalError`].

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tempfile::TempDir;

use crate::data::{read_records, write_records, PatientRecord, Schema, TrainingData};
use crate::error::{Error, ExternalError, Result};
use crate::generators::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalGenerator {
    pub executable: PathBuf,
    /// Directory under which per-model working directories are created.
    /// Defaults to the system temporary directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_root: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExternalModel {
    executable: PathBuf,
    workdir: Arc<TempDir>,
}

impl ExternalGenerator {
    pub fn new(executable: impl Into<PathBuf>) -> Self {
        Self {
            executable: executable.into(),
            work_root: None,
        }
    }

    pub(crate) fn fit(
        &self,
        train: &TrainingData,
        hyperparams: &HyperParams,
        seed: u64,
    ) -> Result<ExternalModel> {
        let builder = {
            let mut b = tempfile::Builder::new();
            b.prefix("vcat-model-");
            b
        };
        let workdir = match &self.work_root {
            Some(root) => {
                std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
                builder.tempdir_in(root)
            }
            None => builder.tempdir(),
        }
        .map_err(|e| Error::io("<model workdir>", e))?;

        let train_path = workdir.path().join("train.csv");
        let schema_path = workdir.path().join("schema.json");
        let model_dir = workdir.path().join("model");
        std::fs::create_dir(&model_dir).map_err(|e| Error::io(&model_dir, e))?;

        let file = std::fs::File::create(&train_path).map_err(|e| Error::io(&train_path, e))?;
        write_records(std::io::BufWriter::new(file), &train.schema, &train.records)?;
        train.schema.to_json_file(&schema_path)?;
        let hp_path = model_dir.join("hyperparams.json");
        std::fs::write(&hp_path, serde_json::to_string_pretty(hyperparams)?)
            .map_err(|e| Error::io(&hp_path, e))?;

        run(
            &self.executable,
            "fit",
            &[
                "--train".as_ref(),
                train_path.as_os_str(),
                "--schema".as_ref(),
                schema_path.as_os_str(),
                "--model-dir".as_ref(),
                model_dir.as_os_str(),
                "--seed".as_ref(),
                seed.to_string().as_ref(),
            ],
        )?;
        Ok(ExternalModel {
            executable: self.executable.clone(),
            workdir: Arc::new(workdir),
        })
    }
}

fn run(executable: &Path, sub: &str, args: &[&std::ffi::OsStr]) -> Result<()> {
    let output = Command::new(executable)
        .arg(sub)
        .args(args)
        .output()
        .map_err(|source| ExternalError::Launch {
            executable: executable.to_path_buf(),
            source,
        })?;
    if !output.status.success() {
        let status = match output.status.code() {
            Some(code) => code.to_string(),
            None => "signal".to_string(),
        };
        return Err(ExternalError::ExitStatus {
            command: format!("{} {sub}", executable.display()),
            status,
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        }
        .into());
    }
    Ok(())
}

impl ExternalModel {
    pub fn model_dir(&self) -> PathBuf {
        self.workdir.path().join("model")
    }

    pub(crate) fn sample(&self, schema: &Schema, s: usize, seed: u64) -> Result<Vec<PatientRecord>> {
        let out = tempfile::Builder::new()
            .prefix("sample-")
            .suffix(".csv")
            .tempfile_in(self.workdir.path())
            .map_err(|e| Error::io(self.workdir.path(), e))?;
        let model_dir = self.model_dir();
        run(
            &self.executable,
            "sample",
            &[
                "--model-dir".as_ref(),
                model_dir.as_os_str(),
                "--n".as_ref(),
                s.to_string().as_ref(),
                "--seed".as_ref(),
                seed.to_string().as_ref(),
                "--out".as_ref(),
                out.path().as_os_str(),
            ],
        )?;
        let file = std::fs::File::open(out.path()).map_err(|e| Error::io(out.path(), e))?;
        let records = read_records(file, schema)
            .map_err(|e| ExternalError::MalformedOutput(e.to_string()))?;
        if records.len() != s {
            return Err(ExternalError::RowCount {
                expected: s,
                actual: records.len(),
            }
            .into());
        }
        if let Some(pos) = records.iter().position(|r| r.has_missing()) {
            return Err(ExternalError::MalformedOutput(format!(
                "row {} has missing values",
                pos + 1
            ))
            .into());
        }
        Ok(records)
    }
}
