#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use riskscreen::ingest::{build_cohort, Cohort, CohortCriteria, ExtendedCovariates, PatientRecord, Race};
use riskscreen::model::DesignMatrix;
use riskscreen::synth::true_risk;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Plain full-Newton maximizer of the weighted log-likelihood, written
/// without any of the library's numerics.
pub fn newton_oracle(x: &[Vec<f64>], y: &[bool], w: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for i in 0..x.len() {
            let eta: f64 = (0..p).map(|j| x[i][j] * beta[j]).sum();
            let mu = sigmoid(eta);
            let r = if y[i] { 1.0 } else { 0.0 } - mu;
            for j in 0..p {
                grad[j] += w[i] * x[i][j] * r;
                for k in 0..p {
                    hess[j][k] += w[i] * mu * (1.0 - mu) * x[i][j] * x[i][k];
                }
            }
        }
        let step = solve(hess, grad);
        let size = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for j in 0..p {
            beta[j] += step[j];
        }
        if size < 1e-15 {
            break;
        }
    }
    beta
}

pub struct RandomDesign {
    pub rows: Vec<Vec<f64>>,
    pub y: Vec<bool>,
    pub w: Vec<f64>,
}

impl RandomDesign {
    pub fn to_design(&self) -> DesignMatrix {
        let p = self.rows[0].len();
        let values = DMatrix::from_fn(self.rows.len(), p, |i, j| self.rows[i][j]);
        let cols = (0..p).map(|j| if j == 0 { "(intercept)".to_string() } else { format!("x{j}") }).collect();
        DesignMatrix::from_parts(cols, values, self.y.clone(), self.w.clone()).unwrap()
    }
}

/// Intercept plus `p - 1` standard-normal covariates, moderate true
/// coefficients and positive weights.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> RandomDesign {
    let truth: Vec<f64> = (0..p).map(|j| if j == 0 { -0.5 } else { rng.gen_range(-1.0..1.0) }).collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|j| if j == 0 { 1.0 } else { StandardNormal.sample(rng) }).collect();
        let eta: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
        y.push(rng.gen_bool(sigmoid(eta)));
        rows.push(row);
    }
    let w = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    RandomDesign { rows, y, w }
}

pub fn record(id: u64, age: u32, bmi: f64, race: Race, diabetes: bool, weight: f64) -> PatientRecord {
    PatientRecord {
        id,
        cycle: "2011-2012".into(),
        age: Some(age),
        bmi: Some(bmi),
        race: Some(race),
        pregnant: false,
        diabetes: Some(diabetes),
        weight_survey: weight,
        extended: ExtendedCovariates::default(),
    }
}

/// Cohort drawn from the synthetic generating model, all records eligible.
pub fn random_cohort(rng: &mut ChaCha8Rng, n: usize) -> Cohort {
    let records = (0..n as u64)
        .map(|id| {
            let age = rng.gen_range(18..=70);
            let bmi = (rng.gen_range(185..=500) as f64) / 10.0;
            let race = Race::ALL[rng.gen_range(0..5)];
            let y = rng.gen_bool(true_risk(age as f64, bmi, race));
            record(id + 1, age, bmi, race, y, rng.gen_range(1_000.0..60_000.0))
        })
        .collect();
    build_cohort(records, &CohortCriteria::default()).unwrap()
}

pub fn fixture(path: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(path)
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Sum of products carried as an unevaluated pair, so the result is
/// accurate to about one rounding regardless of cancellation.
#[derive(Default)]
struct Exact {
    hi: f64,
    lo: f64,
}

impl Exact {
    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        let (s, t) = two_sum(self.hi, p);
        self.hi = s;
        self.lo += t + e;
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Per-capita gain from the utility of each policy on every record, summed
/// with error-free transformations.
pub fn brute_force_gain(sa: &[f64], sb: &[f64], y: &[bool], w: &[f64], ta: f64, tb: f64, r: f64) -> f64 {
    let mut diff = Exact::default();
    let mut total = Exact::default();
    for i in 0..y.len() {
        let benefit = if y[i] { r - 1.0 } else { -1.0 };
        let ua = if sa[i] > ta { benefit } else { 0.0 };
        let ub = if sb[i] > tb { benefit } else { 0.0 };
        diff.add_product(w[i], ua);
        diff.add_product(-w[i], ub);
        total.add_product(w[i], 1.0);
    }
    diff.value() / total.value()
}

/// Screened weight is within budget, and the next lower observed level
/// would exceed it.
pub fn capacity_ok(scores: &[f64], weights: &[f64], q: f64, t: f64) -> Result<(), String> {
    let total: f64 = weights.iter().sum();
    let above = |t: f64| scores.iter().zip(weights).filter(|(s, _)| **s > t).map(|(_, w)| w).sum::<f64>();
    if above(t) > q * total {
        return Err(format!("threshold {t} screens {} of {total} with q = {q}", above(t)));
    }
    let lower = scores.iter().zip(weights).filter(|(s, w)| **s <= t && **w > 0.0).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
    if lower.is_finite() && above(lower.next_down()) <= q * total {
        return Err(format!("threshold {t} not maximal: screening level {lower} also fits"));
    }
    Ok(())
}
