use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::{Column, ColumnKind, RawTable, Value};
use super::IngestError;

/// Declares which CSV header feeds each variable of the resulting table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    /// Dataset name given to the table, e.g. `DEMO_G`.
    pub table: String,
    #[serde(default)]
    pub cycle: Option<String>,
    pub columns: Vec<CsvColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvColumn {
    pub variable: String,
    /// CSV header to read; defaults to the variable name.
    #[serde(default)]
    pub header: Option<String>,
    #[serde(default = "default_kind")]
    pub kind: ColumnKind,
}

fn default_kind() -> ColumnKind {
    ColumnKind::Numeric
}

impl CsvSchema {
    /// Schema whose CSV headers equal the variable names.
    pub fn identity(table: impl Into<String>, columns: &[Column]) -> Self {
        CsvSchema {
            table: table.into(),
            cycle: None,
            columns: columns
                .iter()
                .map(|c| CsvColumn { variable: c.name.clone(), header: None, kind: c.kind })
                .collect(),
        }
    }
}

/// Loads a pre-flattened CSV file into a single raw table.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<RawTable>, IngestError> {
    let file = std::fs::File::open(path)?;
    Ok(vec![read_csv(file, schema)?])
}

pub(crate) fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<RawTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut positions = Vec::with_capacity(schema.columns.len());
    let mut missing = Vec::new();
    for col in &schema.columns {
        let header = col.header.as_deref().unwrap_or(&col.variable);
        match headers.iter().position(|h| h == header) {
            Some(p) => positions.push(p),
            None => missing.push(header.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(IngestError::Schema { missing });
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(positions.len());
        for (col, &p) in schema.columns.iter().zip(&positions) {
            let cell = rec.get(p).unwrap_or("");
            let value = if cell.is_empty() || cell == "." {
                Value::Missing
            } else {
                match col.kind {
                    ColumnKind::Text => Value::Text(cell.to_string()),
                    ColumnKind::Numeric => Value::Number(cell.parse().map_err(|_| IngestError::Row {
                        row: i + 1,
                        column: col.variable.clone(),
                        value: cell.to_string(),
                    })?),
                }
            };
            row.push(value);
        }
        rows.push(row);
    }

    let columns = schema
        .columns
        .iter()
        .map(|c| Column { name: c.variable.clone(), kind: c.kind })
        .collect();
    let mut table = RawTable::new(schema.table.clone(), columns, rows).map_err(IngestError::Harmonize)?;
    table.cycle = schema.cycle.clone();
    Ok(table)
}

/// Writes a raw table as CSV with one header per variable; missing cells are empty.
pub fn table_to_csv(table: &RawTable) -> Result<String, IngestError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(table.columns.iter().map(|c| c.name.as_str()))?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| match v {
            Value::Number(x) => x.to_string(),
            Value::Text(s) => s.clone(),
            Value::Missing => String::new(),
        }))?;
    }
    let bytes = w.into_inner().map_err(|e| IngestError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
