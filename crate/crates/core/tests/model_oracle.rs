mod common;

use common::{newton_oracle, random_cohort, random_design, rng};
use nalgebra::DMatrix;
use rand::Rng;
use riskscreen::model::{
    build_design, fit_logistic, log_likelihood, logistic, predict, score, DesignMatrix, FeatureSpec, FitOptions,
    RiskModel,
};

#[test]
fn irls_matches_dense_newton_on_random_designs() {
    let mut r = rng(20);
    for case in 0..20 {
        let n = r.gen_range(40..=100);
        let p = r.gen_range(1..=5);
        let d = random_design(&mut r, n, p);
        let oracle = newton_oracle(&d.rows, &d.y, &d.w);
        let model = fit_logistic(&d.to_design(), &FitOptions::default()).unwrap();
        assert!(model.converged);
        let err = model.coefficients.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8, "case {case} (n={n}, p={p}): max error {err:e}");
    }
}

#[test]
fn fifty_rows_two_covariates() {
    let mut r = rng(50);
    let d = random_design(&mut r, 50, 3);
    let oracle = newton_oracle(&d.rows, &d.y, &d.w);
    let model = fit_logistic(&d.to_design(), &FitOptions::default()).unwrap();
    for (a, b) in model.coefficients.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut r = rng(8);
    for _ in 0..20 {
        let n = r.gen_range(20..=100);
        let p = r.gen_range(1..=5);
        let d = random_design(&mut r, n, p).to_design();
        let beta: Vec<f64> = (0..p).map(|_| r.gen_range(-1.0..1.0)).collect();
        let g = score(&d, &beta);
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for j in 0..p {
            let h = 1e-5;
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (log_likelihood(&d, &up) - log_likelihood(&d, &dn)) / (2.0 * h);
            let rel = (fd - g[j]).abs() / scale.max(1e-12);
            assert!(rel <= 1e-6, "coordinate {j}: analytic {} vs fd {fd} (rel {rel:e})", g[j]);
        }
    }
}

fn intercept_only(y: Vec<bool>, w: Vec<f64>) -> DesignMatrix {
    let n = y.len();
    DesignMatrix::from_parts(vec!["(intercept)".into()], DMatrix::from_element(n, 1, 1.0), y, w).unwrap()
}

#[test]
fn intercept_only_closed_form() {
    let d = intercept_only(vec![true, false, true, false], vec![1.0; 4]);
    let m = fit_logistic(&d, &FitOptions::default()).unwrap();
    assert!(m.coefficients[0].abs() < 1e-12);

    let d = intercept_only(vec![true, false, false, false, true], vec![3.0, 1.0, 2.0, 4.0, 0.5]);
    let q: f64 = 3.5 / 10.5;
    let m = fit_logistic(&d, &FitOptions::default()).unwrap();
    assert!((m.coefficients[0] - (q / (1.0 - q)).ln()).abs() < 1e-10);
    for p in predict(&m, &d).unwrap() {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn logistic_hand_values() {
    assert_eq!(logistic(0.0), 0.5);
    assert!((logistic((1.0f64 / 69.0).ln()) - 1.0 / 70.0).abs() < 1e-15);
}

#[test]
fn score_equations_hold_and_calibration_in_the_large() {
    let mut r = rng(3);
    let cohort = random_cohort(&mut r, 800);
    for spec in [FeatureSpec::race_unaware(), FeatureSpec::race_aware()] {
        let d = build_design(&cohort, &spec).unwrap();
        let m = fit_logistic(&d, &FitOptions::default()).unwrap();
        let total: f64 = d.weights.iter().sum();
        let g = score(&d, &m.coefficients);
        assert!(g.iter().all(|gj| (gj / total).abs() <= 1e-8));
        let p = predict(&m, &d).unwrap();
        let mean_p: f64 = p.iter().zip(&d.weights).map(|(p, w)| p * w).sum::<f64>() / total;
        let prev: f64 = d.outcome.iter().zip(&d.weights).filter(|(y, _)| **y).map(|(_, w)| w).sum::<f64>() / total;
        assert!((mean_p - prev).abs() < 1e-8);
    }
}

#[test]
fn raising_a_coefficient_raises_risk_where_the_feature_is_positive() {
    let mut r = rng(4);
    let d = random_design(&mut r, 60, 3).to_design();
    let m = fit_logistic(&d, &FitOptions::default()).unwrap();
    let base = predict(&m, &d).unwrap();
    let mut bumped = m.clone();
    bumped.coefficients[1] += 0.25;
    let after = predict(&bumped, &d).unwrap();
    for i in 0..d.nrows() {
        if d.values[(i, 1)] > 0.0 {
            assert!(after[i] > base[i]);
        }
    }
}

#[test]
fn fits_are_bit_identical_and_json_round_trips() {
    let mut r = rng(5);
    let cohort = random_cohort(&mut r, 500);
    let d = build_design(&cohort, &FeatureSpec::race_aware()).unwrap();
    let a = fit_logistic(&d, &FitOptions::default()).unwrap();
    let b = fit_logistic(&d, &FitOptions::default()).unwrap();
    assert_eq!(a, b);
    let back = RiskModel::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.predict_cohort(&cohort).unwrap().1, a.predict_cohort(&cohort).unwrap().1);
}

#[test]
fn extended_spec_column_count() {
    // intercept, age, age², bmi, bmi², gender, weight, height, waist, greatest weight,
    // family history, depressed, income, insured, food secure
    assert_eq!(FeatureSpec::extended_race_unaware().column_labels().len(), 15);
}
