//! Reading NHANES-style source files and turning them into an analysis cohort.

mod cohort;
mod csv_source;
mod harmonize;
pub mod ibm;
mod record;
mod snapshot;
mod table;
mod xport;

pub use cohort::{build_cohort, Cohort, CohortCriteria, ExclusionReason};
pub use csv_source::{load_csv, table_to_csv, CsvColumn, CsvSchema};
pub use harmonize::{harmonize_cycles, nhanes_race_codes, HarmonizationMap, Harmonized, OutcomeDefinition};
pub use record::{ExtendedCovariates, Gender, PatientRecord, Race};
pub use snapshot::{read_cohort_csv, write_cohort_csv, CohortProvenance, COHORT_COLUMNS};
pub use table::{cycle_from_dataset_name, Column, ColumnKind, RawTable, Value};
pub use xport::{parse_xport, write_xport, RECORD_LEN};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed XPORT file at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("truncated XPORT file at byte offset {offset}: needed {needed} bytes, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },

    #[error("unsupported file format: {0}")]
    UnsupportedFormat(String),

    #[error("cannot write XPORT: {0}")]
    Write(String),

    #[error("CSV schema error: missing required column(s) {}", .missing.join(", "))]
    Schema { missing: Vec<String> },

    #[error("CSV row {row}: cannot parse `{value}` in column `{column}` as a number")]
    Row { row: usize, column: String, value: String },

    #[error("harmonization error: {0}")]
    Harmonize(String),

    #[error("invalid cohort criteria: {0}")]
    Criteria(String),

    #[error("cohort is empty after applying the inclusion criteria")]
    EmptyCohort,

    #[error("cohort snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
