//! Trial data: schema, records, CSV I/O, preprocessing, imputation and
//! training-set selection.

pub mod csvio;
pub mod dataset;
pub mod impute;
pub mod preprocess;
pub mod schema;
pub mod training;

pub use csvio::{load_csv, read_records, write_csv, write_records};
pub use dataset::{validate_record, Cell, PatientRecord, TrainingData, TrainingSet, TrialDataset};
pub use impute::impute_chained;
pub use preprocess::{derive_binary_outcome, recode_categories, OutcomeCase, OutcomeRule, Pattern};
pub use schema::{ColumnKind, ColumnSpec, Schema};
pub use training::{draw_training_set, select_n_first};
