//! Feature specifications and their textual term grammar.
//!
//! ```text
//! term  := factor (":" factor)*
//! factor:= "intercept" | var | "poly(" var "," degree ")" | "C(" var [", ref=" level] ")"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::ingest::{Gender, PatientRecord, Race};

/// A cohort variable that can enter a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Age,
    Bmi,
    Race,
    Gender,
    Weight,
    Height,
    Waist,
    GreatestWeight,
    FamilyHistory,
    Depressed,
    Income,
    Insured,
    FoodSecure,
}

const YES_NO: &[&str] = &["no", "yes"];

impl Variable {
    pub const ALL: [Variable; 13] = [
        Variable::Age,
        Variable::Bmi,
        Variable::Race,
        Variable::Gender,
        Variable::Weight,
        Variable::Height,
        Variable::Waist,
        Variable::GreatestWeight,
        Variable::FamilyHistory,
        Variable::Depressed,
        Variable::Income,
        Variable::Insured,
        Variable::FoodSecure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Age => "age",
            Variable::Bmi => "bmi",
            Variable::Race => "race",
            Variable::Gender => "gender",
            Variable::Weight => "weight",
            Variable::Height => "height",
            Variable::Waist => "waist",
            Variable::GreatestWeight => "greatest_weight",
            Variable::FamilyHistory => "family_history",
            Variable::Depressed => "depressed",
            Variable::Income => "income",
            Variable::Insured => "insured",
            Variable::FoodSecure => "food_secure",
        }
    }

    /// Levels of a categorical variable, or `None` for numeric ones.
    pub fn levels(self) -> Option<&'static [&'static str]> {
        match self {
            Variable::Race => Some(&["Asian", "Black", "Hispanic", "White", "Other"]),
            Variable::Gender => Some(&["Male", "Female"]),
            Variable::FamilyHistory | Variable::Depressed | Variable::Insured | Variable::FoodSecure => {
                Some(YES_NO)
            }
            _ => None,
        }
    }

    pub fn is_numeric(self) -> bool {
        self.levels().is_none()
    }

    pub fn default_reference(self) -> Option<&'static str> {
        match self {
            Variable::Race => Some("White"),
            Variable::Gender => Some("Male"),
            v if !v.is_numeric() => Some("no"),
            _ => None,
        }
    }

    pub fn numeric_value(self, r: &PatientRecord) -> Option<f64> {
        let e = &r.extended;
        match self {
            Variable::Age => r.age.map(f64::from),
            Variable::Bmi => r.bmi,
            Variable::Weight => e.weight_kg,
            Variable::Height => e.height_cm,
            Variable::Waist => e.waist_cm,
            Variable::GreatestWeight => e.greatest_weight_kg,
            Variable::Income => e.income,
            _ => None,
        }
    }

    /// Index into [`Variable::levels`] for a categorical variable.
    pub fn level_value(self, r: &PatientRecord) -> Option<usize> {
        let e = &r.extended;
        let yes_no = |b: Option<bool>| b.map(usize::from);
        match self {
            Variable::Race => r.race.map(|race| Race::ALL.iter().position(|&x| x == race).unwrap()),
            Variable::Gender => e.gender.map(|g| match g {
                Gender::Male => 0,
                Gender::Female => 1,
            }),
            Variable::FamilyHistory => yes_no(e.family_history),
            Variable::Depressed => yes_no(e.depressed),
            Variable::Insured => yes_no(e.insured),
            Variable::FoodSecure => yes_no(e.food_secure),
            _ => None,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::UnknownVariable(s.to_string()))
    }
}

/// One additive term of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    Intercept,
    /// Standardized variable raised to powers `1..=degree`.
    Numeric { variable: Variable, degree: u32 },
    /// Treatment-coded indicators for every level except `reference`.
    Indicator { variable: Variable, reference: String },
    Interaction(Box<Term>, Box<Term>),
}

impl Term {
    pub fn numeric(variable: Variable, degree: u32) -> Term {
        Term::Numeric { variable, degree }
    }

    pub fn indicator(variable: Variable, reference: &str) -> Term {
        Term::Indicator { variable, reference: reference.to_string() }
    }

    pub fn interaction(a: Term, b: Term) -> Term {
        Term::Interaction(Box::new(a), Box::new(b))
    }

    fn variables(&self, out: &mut Vec<Variable>) {
        match self {
            Term::Intercept => {}
            Term::Numeric { variable, .. } | Term::Indicator { variable, .. } => out.push(*variable),
            Term::Interaction(a, b) => {
                a.variables(out);
                b.variables(out);
            }
        }
    }

    fn validate(&self, top_level: bool) -> Result<(), ModelError> {
        match self {
            Term::Intercept if !top_level => Err(ModelError::Spec("intercept cannot appear in an interaction".into())),
            Term::Intercept => Ok(()),
            Term::Numeric { variable, degree } => {
                if !variable.is_numeric() {
                    return Err(ModelError::Spec(format!("`{variable}` is categorical; use C({variable})")));
                }
                if *degree == 0 {
                    return Err(ModelError::Spec(format!("polynomial degree for `{variable}` must be ≥ 1")));
                }
                Ok(())
            }
            Term::Indicator { variable, reference } => {
                let levels = variable
                    .levels()
                    .ok_or_else(|| ModelError::Spec(format!("`{variable}` is numeric and has no levels")))?;
                if !levels.iter().any(|l| l.eq_ignore_ascii_case(reference)) {
                    return Err(ModelError::Spec(format!(
                        "reference level `{reference}` is not one of {levels:?} for `{variable}`"
                    )));
                }
                Ok(())
            }
            Term::Interaction(a, b) => {
                a.validate(false)?;
                b.validate(false)
            }
        }
    }

    /// Expanded columns, in order.
    pub(crate) fn columns(&self) -> Vec<ColumnExpr> {
        match self {
            Term::Intercept => vec![ColumnExpr { label: "(intercept)".into(), factors: vec![] }],
            Term::Numeric { variable, degree } => (1..=*degree)
                .map(|k| ColumnExpr {
                    label: if k == 1 { variable.to_string() } else { format!("{variable}^{k}") },
                    factors: vec![Factor::Power(*variable, k as i32)],
                })
                .collect(),
            Term::Indicator { variable, reference } => {
                let levels = variable.levels().unwrap_or(&[]);
                levels
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| !l.eq_ignore_ascii_case(reference))
                    .map(|(i, l)| ColumnExpr {
                        label: format!("{variable}[{l}]"),
                        factors: vec![Factor::Level(*variable, i)],
                    })
                    .collect()
            }
            Term::Interaction(a, b) => {
                let (ca, cb) = (a.columns(), b.columns());
                let mut out = Vec::with_capacity(ca.len() * cb.len());
                for x in &ca {
                    for y in &cb {
                        let mut factors = x.factors.clone();
                        factors.extend(y.factors.iter().cloned());
                        out.push(ColumnExpr { label: format!("{}:{}", x.label, y.label), factors });
                    }
                }
                out
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("intercept"),
            Term::Numeric { variable, degree: 1 } => write!(f, "{variable}"),
            Term::Numeric { variable, degree } => write!(f, "poly({variable}, {degree})"),
            Term::Indicator { variable, reference } => write!(f, "C({variable}, ref={reference})"),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

fn parse_factor(s: &str) -> Result<Term, ModelError> {
    let s = s.trim();
    let bad = || ModelError::Spec(format!("cannot parse term `{s}`"));
    if s == "intercept" || s == "1" {
        return Ok(Term::Intercept);
    }
    if let Some(inner) = s.strip_prefix("poly(").and_then(|r| r.strip_suffix(')')) {
        let (var, deg) = inner.split_once(',').ok_or_else(bad)?;
        let degree = deg.trim().parse().map_err(|_| bad())?;
        return Ok(Term::Numeric { variable: var.parse()?, degree });
    }
    if let Some(inner) = s.strip_prefix("C(").and_then(|r| r.strip_suffix(')')) {
        let (var, reference) = match inner.split_once(',') {
            Some((v, r)) => {
                let r = r.trim().strip_prefix("ref=").ok_or_else(bad)?.trim();
                (v.parse::<Variable>()?, r.to_string())
            }
            None => {
                let v: Variable = inner.parse()?;
                let r = v
                    .default_reference()
                    .ok_or_else(|| ModelError::Spec(format!("`{v}` is numeric and has no levels")))?;
                (v, r.to_string())
            }
        };
        // Canonical level spelling.
        let reference = var
            .levels()
            .and_then(|ls| ls.iter().find(|l| l.eq_ignore_ascii_case(&reference)))
            .map(|l| l.to_string())
            .unwrap_or(reference);
        return Ok(Term::Indicator { variable: var, reference });
    }
    if s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        let variable: Variable = s.parse()?;
        return Ok(Term::Numeric { variable, degree: 1 });
    }
    Err(bad())
}

impl FromStr for Term {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let first = parse_factor(parts.next().unwrap_or(""))?;
        parts.try_fold(first, |acc, p| Ok(Term::interaction(acc, parse_factor(p)?)))
    }
}

impl TryFrom<String> for Term {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Factor {
    Power(Variable, i32),
    Level(Variable, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ColumnExpr {
    pub label: String,
    pub factors: Vec<Factor>,
}

/// Centering and scaling constants for one numeric variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: f64,
    pub sd: f64,
}

/// A named list of terms. `scaling` is filled in the first time a design is
/// built and reused afterwards so new data is transformed identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scaling: BTreeMap<Variable, Scaling>,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, terms: Vec<Term>) -> Self {
        FeatureSpec { name: name.into(), terms, scaling: BTreeMap::new() }
    }

    /// Intercept, quadratic age and quadratic BMI.
    pub fn race_unaware() -> Self {
        FeatureSpec::new(
            "race_unaware",
            vec![Term::Intercept, Term::numeric(Variable::Age, 2), Term::numeric(Variable::Bmi, 2)],
        )
    }

    /// [`FeatureSpec::race_unaware`] plus race indicators (reference White).
    pub fn race_aware() -> Self {
        let mut s = FeatureSpec::race_unaware();
        s.name = "race_aware".into();
        s.terms.push(Term::indicator(Variable::Race, "White"));
        s
    }

    /// Race-unaware model with the extended covariate list.
    pub fn extended_race_unaware() -> Self {
        let mut s = FeatureSpec::race_unaware();
        s.name = "extended_race_unaware".into();
        s.terms.extend([
            Term::indicator(Variable::Gender, "Male"),
            Term::numeric(Variable::Weight, 1),
            Term::numeric(Variable::Height, 1),
            Term::numeric(Variable::Waist, 1),
            Term::numeric(Variable::GreatestWeight, 1),
            Term::indicator(Variable::FamilyHistory, "no"),
            Term::indicator(Variable::Depressed, "no"),
            Term::numeric(Variable::Income, 1),
            Term::indicator(Variable::Insured, "no"),
            Term::indicator(Variable::FoodSecure, "no"),
        ]);
        s
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let intercepts = self.terms.iter().filter(|t| matches!(t, Term::Intercept)).count();
        if intercepts != 1 {
            return Err(ModelError::Spec(format!(
                "model `{}` must have exactly one intercept term, found {intercepts}",
                self.name
            )));
        }
        for t in &self.terms {
            t.validate(true)?;
        }
        let labels = self.column_labels();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(ModelError::Spec(format!("duplicate column `{l}` in model `{}`", self.name)));
            }
        }
        Ok(())
    }

    pub fn variables(&self) -> Vec<Variable> {
        let mut v = Vec::new();
        for t in &self.terms {
            t.variables(&mut v);
        }
        v.sort();
        v.dedup();
        v
    }

    pub(crate) fn column_exprs(&self) -> Vec<ColumnExpr> {
        self.terms.iter().flat_map(Term::columns).collect()
    }

    pub fn column_labels(&self) -> Vec<String> {
        self.column_exprs().into_iter().map(|c| c.label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_round_trips() {
        for s in ["intercept", "age", "poly(bmi, 2)", "C(race, ref=White)", "poly(age, 2):C(race, ref=Asian)"] {
            let t: Term = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
        let t: Term = "C(race)".parse().unwrap();
        assert_eq!(t, Term::indicator(Variable::Race, "White"));
        let t: Term = "C(race, ref=asian)".parse().unwrap();
        assert_eq!(t, Term::indicator(Variable::Race, "Asian"));
    }

    #[test]
    fn unknown_variable() {
        assert!(matches!("poly(shoe_size, 2)".parse::<Term>(), Err(ModelError::UnknownVariable(_))));
    }

    #[test]
    fn validation_rules() {
        let no_intercept = FeatureSpec::new("x", vec![Term::numeric(Variable::Age, 1)]);
        assert!(no_intercept.validate().is_err());
        let two = FeatureSpec::new("x", vec![Term::Intercept, Term::Intercept]);
        assert!(two.validate().is_err());
        let cat_numeric = FeatureSpec::new("x", vec![Term::Intercept, Term::numeric(Variable::Race, 1)]);
        assert!(cat_numeric.validate().is_err());
        let bad_ref = FeatureSpec::new("x", vec![Term::Intercept, Term::indicator(Variable::Race, "Martian")]);
        assert!(bad_ref.validate().is_err());
        FeatureSpec::race_aware().validate().unwrap();
        FeatureSpec::extended_race_unaware().validate().unwrap();
    }

    #[test]
    fn indicator_expands_to_k_minus_one() {
        let s = FeatureSpec::new("x", vec![Term::Intercept, Term::indicator(Variable::Race, "White")]);
        assert_eq!(
            s.column_labels(),
            vec!["(intercept)", "race[Asian]", "race[Black]", "race[Hispanic]", "race[Other]"]
        );
    }

    #[test]
    fn interaction_labels() {
        let t: Term = "poly(age, 2):C(gender)".parse().unwrap();
        let labels: Vec<_> = t.columns().into_iter().map(|c| c.label).collect();
        assert_eq!(labels, vec!["age:gender[Female]", "age^2:gender[Female]"]);
    }

    #[test]
    fn spec_json_round_trip() {
        let mut s = FeatureSpec::race_aware();
        s.scaling.insert(Variable::Age, Scaling { mean: 44.1, sd: 14.2 });
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<FeatureSpec>(&json).unwrap(), s);
    }
}
