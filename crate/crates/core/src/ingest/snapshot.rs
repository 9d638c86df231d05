//! Cohort snapshot: a fixed-column CSV plus a JSON provenance sidecar.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, CohortCriteria, ExclusionReason};
use super::record::{ExtendedCovariates, Gender, PatientRecord, Race};
use super::IngestError;

pub const COHORT_COLUMNS: [&str; 18] = [
    "id",
    "cycle",
    "age",
    "bmi",
    "race",
    "pregnant",
    "diabetes",
    "weight_survey",
    "gender",
    "weight_kg",
    "height_cm",
    "waist_cm",
    "greatest_weight_kg",
    "family_history",
    "depressed",
    "income",
    "insured",
    "food_secure",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortProvenance {
    pub criteria: CohortCriteria,
    pub source_cycles: Vec<String>,
    pub dropped_counts: BTreeMap<ExclusionReason, usize>,
    pub records: usize,
}

impl CohortProvenance {
    pub fn of(cohort: &Cohort) -> Self {
        CohortProvenance {
            criteria: cohort.criteria.clone(),
            source_cycles: cohort.source_cycles.clone(),
            dropped_counts: cohort.dropped_counts.clone(),
            records: cohort.records.len(),
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

pub fn write_cohort_csv(cohort: &Cohort) -> Result<Vec<u8>, IngestError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COHORT_COLUMNS)?;
    for r in &cohort.records {
        let e = &r.extended;
        w.write_record([
            r.id.to_string(),
            r.cycle.clone(),
            opt(r.age),
            opt(r.bmi),
            opt(r.race.map(Race::as_str)),
            flag(r.pregnant),
            opt(r.diabetes.map(flag)),
            r.weight_survey.to_string(),
            opt(e.gender.map(Gender::as_str)),
            opt(e.weight_kg),
            opt(e.height_cm),
            opt(e.waist_cm),
            opt(e.greatest_weight_kg),
            opt(e.family_history.map(flag)),
            opt(e.depressed.map(flag)),
            opt(e.income),
            opt(e.insured.map(flag)),
            opt(e.food_secure.map(flag)),
        ])?;
    }
    w.into_inner().map_err(|e| IngestError::Io(e.into_error()))
}

fn parse<T: FromStr>(cell: &str, column: &str, row: usize) -> Result<Option<T>, IngestError> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse()
        .map(Some)
        .map_err(|_| IngestError::Snapshot(format!("row {row}: bad value `{cell}` in `{column}`")))
}

fn parse_flag(cell: &str, column: &str, row: usize) -> Result<Option<bool>, IngestError> {
    match cell {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        _ => Err(IngestError::Snapshot(format!("row {row}: bad flag `{cell}` in `{column}`"))),
    }
}

/// Reads a snapshot written by [`write_cohort_csv`] and reattaches its provenance.
pub fn read_cohort_csv(bytes: &[u8], provenance: &CohortProvenance) -> Result<Cohort, IngestError> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(COHORT_COLUMNS.iter().copied()) {
        return Err(IngestError::Snapshot("unexpected column layout".into()));
    }
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let c = |j: usize| rec.get(j).unwrap_or("");
        let required = |j: usize| -> Result<&str, IngestError> {
            let v = c(j);
            if v.is_empty() {
                Err(IngestError::Snapshot(format!("row {row}: `{}` is empty", COHORT_COLUMNS[j])))
            } else {
                Ok(v)
            }
        };
        let gender = match c(8) {
            "" => None,
            g => Some(Gender::from_str(g).map_err(IngestError::Snapshot)?),
        };
        let race = match c(4) {
            "" => None,
            g => Some(Race::from_str(g).map_err(IngestError::Snapshot)?),
        };
        records.push(PatientRecord {
            id: parse(required(0)?, "id", row)?.unwrap_or_default(),
            cycle: c(1).to_string(),
            age: parse(c(2), "age", row)?,
            bmi: parse(c(3), "bmi", row)?,
            race,
            pregnant: parse_flag(c(5), "pregnant", row)?.unwrap_or(false),
            diabetes: parse_flag(c(6), "diabetes", row)?,
            weight_survey: parse(required(7)?, "weight_survey", row)?.unwrap_or_default(),
            extended: ExtendedCovariates {
                gender,
                weight_kg: parse(c(9), "weight_kg", row)?,
                height_cm: parse(c(10), "height_cm", row)?,
                waist_cm: parse(c(11), "waist_cm", row)?,
                greatest_weight_kg: parse(c(12), "greatest_weight_kg", row)?,
                family_history: parse_flag(c(13), "family_history", row)?,
                depressed: parse_flag(c(14), "depressed", row)?,
                income: parse(c(15), "income", row)?,
                insured: parse_flag(c(16), "insured", row)?,
                food_secure: parse_flag(c(17), "food_secure", row)?,
            },
        });
    }
    if records.len() != provenance.records {
        return Err(IngestError::Snapshot(format!(
            "snapshot has {} records but provenance lists {}",
            records.len(),
            provenance.records
        )));
    }
    Ok(Cohort {
        records,
        criteria: provenance.criteria.clone(),
        source_cycles: provenance.source_cycles.clone(),
        dropped_counts: provenance.dropped_counts.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_cohort;

    #[test]
    fn snapshot_round_trips() {
        let r = PatientRecord {
            id: 7,
            cycle: "2013-2014".into(),
            age: Some(44),
            bmi: Some(27.3),
            race: Some(Race::Asian),
            pregnant: false,
            diabetes: Some(true),
            weight_survey: 12345.678901234,
            extended: ExtendedCovariates {
                gender: Some(Gender::Female),
                waist_cm: Some(88.1),
                family_history: Some(false),
                income: Some(1.23),
                ..Default::default()
            },
        };
        let mut r2 = r.clone();
        r2.id = 8;
        r2.age = Some(10);
        let cohort = build_cohort(vec![r, r2], &CohortCriteria::default()).unwrap();
        let bytes = write_cohort_csv(&cohort).unwrap();
        let prov = CohortProvenance::of(&cohort);
        let back = read_cohort_csv(&bytes, &prov).unwrap();
        assert_eq!(back, cohort);
        let json = serde_json::to_string(&prov).unwrap();
        assert_eq!(serde_json::from_str::<CohortProvenance>(&json).unwrap(), prov);
    }
}
