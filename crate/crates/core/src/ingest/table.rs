use serde::{Deserialize, Serialize};

/// Storage class of a raw column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn numeric(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: ColumnKind::Numeric }
    }

    pub fn text(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: ColumnKind::Text }
    }
}

/// A single cell. Blank text and SAS missing codes both decode to `Missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Number(f64),
    Text(String),
    Missing,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

/// One dataset as it came off disk, before any harmonization.
///
/// Every row holds exactly one value per column and column names are unique;
/// [`RawTable::new`] enforces both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
    /// Survey cycle, e.g. `"2011-2012"`. Inferred from the NHANES dataset
    /// suffix when not set explicitly.
    pub cycle: Option<String>,
}

impl RawTable {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        rows: Vec<Vec<Value>>,
    ) -> Result<Self, String> {
        let name = name.into();
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(format!("duplicate variable `{}` in table `{name}`", c.name));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(format!(
                    "row {i} of table `{name}` has {} values, expected {}",
                    row.len(),
                    columns.len()
                ));
            }
            for (value, col) in row.iter().zip(&columns) {
                let ok = match (value, col.kind) {
                    (Value::Missing, _) => true,
                    (Value::Number(_), ColumnKind::Numeric) => true,
                    (Value::Text(_), ColumnKind::Text) => true,
                    _ => false,
                };
                if !ok {
                    return Err(format!(
                        "row {i} of table `{name}`: value kind does not match column `{}`",
                        col.name
                    ));
                }
            }
        }
        Ok(RawTable { name, columns, rows, cycle: None })
    }

    pub fn with_cycle(mut self, cycle: impl Into<String>) -> Self {
        self.cycle = Some(cycle.into());
        self
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column_index(name).is_some()
    }

    /// The explicit cycle, or one inferred from an NHANES file suffix
    /// (`DEMO_G` → `2011-2012`, … `_J` → `2017-2018`).
    pub fn resolved_cycle(&self) -> Option<String> {
        self.cycle.clone().or_else(|| cycle_from_dataset_name(&self.name))
    }
}

/// Maps the NHANES continuous-survey file suffix to its cycle label.
pub fn cycle_from_dataset_name(name: &str) -> Option<String> {
    let (_, suffix) = name.rsplit_once('_')?;
    let start = match suffix.to_ascii_uppercase().as_str() {
        "B" => 2001,
        "C" => 2003,
        "D" => 2005,
        "E" => 2007,
        "F" => 2009,
        "G" => 2011,
        "H" => 2013,
        "I" => 2015,
        "J" => 2017,
        _ => return None,
    };
    Some(format!("{}-{}", start, start + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names_and_ragged_rows() {
        let cols = vec![Column::numeric("A"), Column::numeric("A")];
        assert!(RawTable::new("T", cols, vec![]).is_err());
        let cols = vec![Column::numeric("A"), Column::text("B")];
        assert!(RawTable::new("T", cols.clone(), vec![vec![Value::Missing]]).is_err());
        assert!(RawTable::new("T", cols, vec![vec![Value::Text("x".into()), Value::Missing]]).is_err());
    }

    #[test]
    fn cycle_suffixes() {
        assert_eq!(cycle_from_dataset_name("DEMO_G").as_deref(), Some("2011-2012"));
        assert_eq!(cycle_from_dataset_name("BMX_J").as_deref(), Some("2017-2018"));
        assert_eq!(cycle_from_dataset_name("DEMO"), None);
    }
}
