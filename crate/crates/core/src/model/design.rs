use nalgebra::DMatrix;

use super::spec::{Factor, FeatureSpec, Scaling, Variable};
use super::ModelError;
use crate::ingest::{Cohort, PatientRecord};

/// Model-ready data: one row per complete-case cohort record.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// Spec with scaling constants resolved.
    pub spec: FeatureSpec,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
    pub outcome: Vec<bool>,
    pub weights: Vec<f64>,
    pub row_ids: Vec<u64>,
    /// Position of each row in the source cohort.
    pub row_index: Vec<usize>,
    /// Cohort records dropped for a missing model variable.
    pub excluded: usize,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Builds a design directly from raw parts, for callers that do not start
    /// from a cohort (simulation, tests). Values are used as given.
    pub fn from_parts(
        columns: Vec<String>,
        values: DMatrix<f64>,
        outcome: Vec<bool>,
        weights: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = values.nrows();
        if columns.len() != values.ncols() || outcome.len() != n || weights.len() != n {
            return Err(ModelError::ColumnMismatch("design parts have inconsistent shapes".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(ModelError::Spec("weights must be finite and nonnegative".into()));
        }
        Ok(DesignMatrix {
            spec: FeatureSpec::new("custom", vec![]),
            columns,
            values,
            outcome,
            weights,
            row_ids: (0..n as u64).collect(),
            row_index: (0..n).collect(),
            excluded: 0,
        })
    }
}

fn complete(record: &PatientRecord, vars: &[Variable]) -> bool {
    vars.iter().all(|v| {
        if v.is_numeric() {
            v.numeric_value(record).is_some_and(f64::is_finite)
        } else {
            v.level_value(record).is_some()
        }
    })
}

/// Expands `spec` over the cohort. Numeric variables are standardized with
/// the constants already in `spec.scaling`, or with the (unweighted) mean and
/// standard deviation of the included rows when absent.
pub fn build_design(cohort: &Cohort, spec: &FeatureSpec) -> Result<DesignMatrix, ModelError> {
    spec.validate()?;
    let vars = spec.variables();

    let included: Vec<usize> = (0..cohort.records.len()).filter(|&i| complete(&cohort.records[i], &vars)).collect();
    let excluded = cohort.records.len() - included.len();
    if included.is_empty() {
        return Err(ModelError::EmptyDesign { model: spec.name.clone(), excluded });
    }

    let mut spec = spec.clone();
    for &v in vars.iter().filter(|v| v.is_numeric()) {
        if spec.scaling.contains_key(&v) {
            continue;
        }
        let xs: Vec<f64> = included.iter().map(|&i| v.numeric_value(&cohort.records[i]).unwrap()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        spec.scaling.insert(v, Scaling { mean, sd });
    }

    let exprs = spec.column_exprs();
    let mut values = DMatrix::zeros(included.len(), exprs.len());
    for (row, &i) in included.iter().enumerate() {
        let r = &cohort.records[i];
        for (col, e) in exprs.iter().enumerate() {
            let mut x = 1.0;
            for f in &e.factors {
                x *= match *f {
                    Factor::Power(v, k) => {
                        let s = spec.scaling[&v];
                        ((v.numeric_value(r).unwrap() - s.mean) / s.sd).powi(k)
                    }
                    Factor::Level(v, level) => {
                        if v.level_value(r) == Some(level) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
            }
            values[(row, col)] = x;
        }
    }

    Ok(DesignMatrix {
        columns: exprs.into_iter().map(|e| e.label).collect(),
        values,
        outcome: included.iter().map(|&i| cohort.records[i].outcome()).collect(),
        weights: included.iter().map(|&i| cohort.records[i].weight_survey).collect(),
        row_ids: included.iter().map(|&i| cohort.records[i].id).collect(),
        row_index: included,
        excluded,
        spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_cohort, CohortCriteria, ExtendedCovariates, Race};
    use crate::model::spec::Term;

    fn record(id: u64, age: u32, bmi: f64, race: Race) -> PatientRecord {
        PatientRecord {
            id,
            cycle: "2011-2012".into(),
            age: Some(age),
            bmi: Some(bmi),
            race: Some(race),
            pregnant: false,
            diabetes: Some(id % 2 == 0),
            weight_survey: 1.0,
            extended: ExtendedCovariates::default(),
        }
    }

    fn cohort() -> Cohort {
        build_cohort(
            vec![record(1, 30, 22.0, Race::White), record(2, 40, 27.0, Race::Asian), record(3, 50, 32.0, Race::Other)],
            &CohortCriteria::default(),
        )
        .unwrap()
    }

    #[test]
    fn intercept_age_bmi_is_3x3() {
        let spec = FeatureSpec::new(
            "m",
            vec![Term::Intercept, Term::numeric(Variable::Age, 1), Term::numeric(Variable::Bmi, 1)],
        );
        let d = build_design(&cohort(), &spec).unwrap();
        assert_eq!((d.nrows(), d.ncols()), (3, 3));
        // age 30/40/50 → mean 40, sd 10
        assert_eq!(d.values[(0, 1)], -1.0);
        assert_eq!(d.values[(2, 1)], 1.0);
        assert_eq!(d.spec.scaling[&Variable::Age], Scaling { mean: 40.0, sd: 10.0 });
    }

    #[test]
    fn race_indicator_adds_four_columns() {
        let base = FeatureSpec::new("m", vec![Term::Intercept, Term::numeric(Variable::Age, 1)]);
        let mut aware = base.clone();
        aware.terms.push(Term::indicator(Variable::Race, "White"));
        let a = build_design(&cohort(), &base).unwrap();
        let b = build_design(&cohort(), &aware).unwrap();
        assert_eq!(b.ncols(), a.ncols() + 4);
        let asian = b.columns.iter().position(|c| c == "race[Asian]").unwrap();
        assert_eq!(b.values.column(asian).as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn missing_extended_rows_are_excluded_and_counted() {
        let mut c = cohort();
        c.records[1].extended.waist_cm = Some(90.0);
        let spec = FeatureSpec::new("m", vec![Term::Intercept, Term::numeric(Variable::Waist, 1)]);
        let d = build_design(&c, &spec).unwrap();
        assert_eq!(d.nrows(), 1);
        assert_eq!(d.excluded, 2);
        assert_eq!(d.row_ids, vec![2]);
        // single row: sd falls back to 1
        assert_eq!(d.values[(0, 1)], 0.0);
    }

    #[test]
    fn all_rows_missing_is_an_error() {
        let spec = FeatureSpec::new("m", vec![Term::Intercept, Term::numeric(Variable::Income, 1)]);
        assert!(matches!(build_design(&cohort(), &spec), Err(ModelError::EmptyDesign { .. })));
    }

    #[test]
    fn stored_scaling_is_reused() {
        let spec = FeatureSpec::new("m", vec![Term::Intercept, Term::numeric(Variable::Age, 2)]);
        let d = build_design(&cohort(), &spec).unwrap();
        let mut other = cohort();
        other.records.truncate(1);
        let d2 = build_design(&other, &d.spec).unwrap();
        assert_eq!(d2.spec.scaling, d.spec.scaling);
        assert_eq!(d2.values.row(0), d.values.row(0));
    }
}
