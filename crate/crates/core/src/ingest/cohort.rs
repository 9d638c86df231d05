use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::record::PatientRecord;
use super::IngestError;

/// Inclusion criteria. Age and BMI bounds are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortCriteria {
    pub age_min: u32,
    pub age_max: u32,
    pub bmi_min: f64,
    pub bmi_max: f64,
    pub exclude_pregnant: bool,
}

impl Default for CohortCriteria {
    fn default() -> Self {
        CohortCriteria { age_min: 18, age_max: 70, bmi_min: 18.5, bmi_max: 50.0, exclude_pregnant: true }
    }
}

impl CohortCriteria {
    pub fn validate(&self) -> Result<(), String> {
        if self.age_min > self.age_max {
            return Err(format!("age_min {} exceeds age_max {}", self.age_min, self.age_max));
        }
        if !(self.bmi_min.is_finite() && self.bmi_max.is_finite()) || self.bmi_min > self.bmi_max {
            return Err(format!("bmi_min {} must not exceed bmi_max {}", self.bmi_min, self.bmi_max));
        }
        Ok(())
    }

    /// First failing criterion, checked in the fixed order of [`ExclusionReason`].
    pub fn exclusion(&self, r: &PatientRecord) -> Option<ExclusionReason> {
        if self.exclude_pregnant && r.pregnant {
            return Some(ExclusionReason::Pregnancy);
        }
        if let Some(age) = r.age {
            if age < self.age_min || age > self.age_max {
                return Some(ExclusionReason::Age);
            }
        }
        if let Some(bmi) = r.bmi {
            if bmi < self.bmi_min || bmi > self.bmi_max {
                return Some(ExclusionReason::Bmi);
            }
        }
        if r.diabetes.is_none() {
            return Some(ExclusionReason::MissingOutcome);
        }
        if r.age.is_none() || r.bmi.is_none() || r.race.is_none() {
            return Some(ExclusionReason::MissingCovariate);
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Pregnancy,
    Age,
    Bmi,
    MissingOutcome,
    MissingCovariate,
}

impl ExclusionReason {
    pub const ORDER: [ExclusionReason; 5] = [
        ExclusionReason::Pregnancy,
        ExclusionReason::Age,
        ExclusionReason::Bmi,
        ExclusionReason::MissingOutcome,
        ExclusionReason::MissingCovariate,
    ];
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::Pregnancy => "pregnancy",
            ExclusionReason::Age => "age",
            ExclusionReason::Bmi => "bmi",
            ExclusionReason::MissingOutcome => "missing_outcome",
            ExclusionReason::MissingCovariate => "missing_covariate",
        })
    }
}

/// The analysis population. Every record satisfies `criteria` and has age,
/// BMI, race and outcome present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub criteria: CohortCriteria,
    pub source_cycles: Vec<String>,
    pub dropped_counts: BTreeMap<ExclusionReason, usize>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.records.iter().map(|r| r.weight_survey).sum()
    }

    pub fn dropped_total(&self) -> usize {
        self.dropped_counts.values().sum()
    }

    /// Same cohort with every survey weight set to 1, for unweighted analyses.
    pub fn with_unit_weights(&self) -> Cohort {
        let mut c = self.clone();
        for r in &mut c.records {
            r.weight_survey = 1.0;
        }
        c
    }
}

/// Applies the inclusion criteria, counting each excluded record under its
/// first failing reason.
pub fn build_cohort(records: Vec<PatientRecord>, criteria: &CohortCriteria) -> Result<Cohort, IngestError> {
    criteria.validate().map_err(IngestError::Criteria)?;

    let mut cycles: Vec<String> = records.iter().map(|r| r.cycle.clone()).collect();
    cycles.sort();
    cycles.dedup();

    let mut dropped: BTreeMap<ExclusionReason, usize> =
        ExclusionReason::ORDER.iter().map(|&r| (r, 0)).collect();
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        match criteria.exclusion(&r) {
            Some(reason) => *dropped.entry(reason).or_default() += 1,
            None => kept.push(r),
        }
    }
    if kept.is_empty() {
        return Err(IngestError::EmptyCohort);
    }
    Ok(Cohort { records: kept, criteria: criteria.clone(), source_cycles: cycles, dropped_counts: dropped })
}
