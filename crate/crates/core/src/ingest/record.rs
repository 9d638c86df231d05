use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Five-level race/ethnicity coding used throughout the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Race {
    Asian,
    Black,
    Hispanic,
    White,
    Other,
}

impl Race {
    pub const ALL: [Race; 5] = [Race::Asian, Race::Black, Race::Hispanic, Race::White, Race::Other];
    /// Groups that get their own report rows.
    pub const REPORTED: [Race; 4] = [Race::Asian, Race::Black, Race::Hispanic, Race::White];

    pub fn as_str(self) -> &'static str {
        match self {
            Race::Asian => "Asian",
            Race::Black => "Black",
            Race::Hispanic => "Hispanic",
            Race::White => "White",
            Race::Other => "Other",
        }
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Race {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Race::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown race/ethnicity `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
        }
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            _ => Err(format!("unknown gender `{s}`")),
        }
    }
}

/// Covariates used only by the extended race-unaware model. Each may be
/// missing independently; missingness is resolved when a design matrix is built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtendedCovariates {
    pub gender: Option<Gender>,
    pub weight_kg: Option<f64>,
    pub height_cm: Option<f64>,
    pub waist_cm: Option<f64>,
    pub greatest_weight_kg: Option<f64>,
    pub family_history: Option<bool>,
    pub depressed: Option<bool>,
    /// Family income-to-poverty ratio.
    pub income: Option<f64>,
    pub insured: Option<bool>,
    pub food_secure: Option<bool>,
}

/// One survey respondent after harmonization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: u64,
    pub cycle: String,
    pub age: Option<u32>,
    pub bmi: Option<f64>,
    pub race: Option<Race>,
    pub pregnant: bool,
    pub diabetes: Option<bool>,
    /// Pooled examination weight (cycle weight divided by the number of cycles).
    pub weight_survey: f64,
    pub extended: ExtendedCovariates,
}

impl PatientRecord {
    /// Diabetes outcome. Records inside a [`crate::ingest::Cohort`] always have one.
    pub fn outcome(&self) -> bool {
        self.diabetes.unwrap_or(false)
    }

    /// Race group. Records inside a cohort always have one.
    pub fn group(&self) -> Race {
        self.race.unwrap_or(Race::Other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn race_parses_case_insensitively() {
        assert_eq!("asian".parse::<Race>().unwrap(), Race::Asian);
        assert_eq!(" White ".parse::<Race>().unwrap(), Race::White);
        assert!("martian".parse::<Race>().is_err());
    }
}
