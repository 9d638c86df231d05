use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{build_design, DesignMatrix};
use super::spec::FeatureSpec;
use super::ModelError;
use crate::ingest::Cohort;

/// Ridge penalty applied when the separation fallback is enabled.
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Convergence threshold on the max-norm of the mean (weight-normalized) score.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Non-intercept coefficients (standardized scale) beyond this magnitude
    /// are treated as quasi-separation.
    pub coefficient_cap: f64,
    /// Refit with this ridge penalty on non-intercept coefficients when
    /// separation is detected. `None` reports separation as an error.
    pub ridge_fallback: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tolerance: 1e-8, max_iter: 100, coefficient_cap: 15.0, ridge_fallback: None }
    }
}

/// A fitted logistic risk model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub spec: FeatureSpec,
    pub columns: Vec<String>,
    /// Log-odds coefficients, aligned with `columns`.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Survey-weighted log-likelihood at the solution.
    pub log_likelihood: f64,
    /// Ridge penalty actually used, if any.
    pub ridge: Option<f64>,
    pub n_obs: usize,
    pub weighted_n: f64,
}

impl RiskModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        serde_json::from_str(s).map_err(|e| ModelError::Json(e.to_string()))
    }

    /// Builds the design for `cohort` with this model's scaling and predicts.
    pub fn predict_cohort(&self, cohort: &Cohort) -> Result<(DesignMatrix, Vec<f64>), ModelError> {
        let design = build_design(cohort, &self.spec)?;
        let risks = predict(self, &design)?;
        Ok((design, risks))
    }
}

/// Numerically stable logistic function.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn linear_predictor(design: &DesignMatrix, beta: &[f64]) -> DVector<f64> {
    &design.values * DVector::from_column_slice(beta)
}

/// Survey-weighted Bernoulli log-likelihood `Σ w (y η − log(1 + e^η))`.
pub fn log_likelihood(design: &DesignMatrix, beta: &[f64]) -> f64 {
    let eta = linear_predictor(design, beta);
    eta.iter()
        .zip(&design.outcome)
        .zip(&design.weights)
        .map(|((&e, &y), &w)| w * (if y { e } else { 0.0 } - log1p_exp(e)))
        .sum()
}

/// Gradient of [`log_likelihood`]: `Xᵀ W (y − p)`.
pub fn score(design: &DesignMatrix, beta: &[f64]) -> Vec<f64> {
    let eta = linear_predictor(design, beta);
    let resid = DVector::from_iterator(
        eta.len(),
        eta.iter()
            .zip(&design.outcome)
            .zip(&design.weights)
            .map(|((&e, &y), &w)| w * (f64::from(u8::from(y)) - logistic(e))),
    );
    (design.values.transpose() * resid).iter().copied().collect()
}

struct Problem<'a> {
    design: &'a DesignMatrix,
    /// Weights normalized to sum to one.
    w: Vec<f64>,
    y: Vec<f64>,
    /// Ridge penalty per coefficient (zero for the intercept).
    penalty: Vec<f64>,
}

impl Problem<'_> {
    fn objective(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.design.values * beta;
        let ll: f64 = eta.iter().zip(&self.y).zip(&self.w).map(|((&e, &y), &w)| w * (y * e - log1p_exp(e))).sum();
        let pen: f64 = beta.iter().zip(&self.penalty).map(|(b, l)| 0.5 * l * b * b).sum();
        ll - pen
    }

    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = &self.design.values * beta;
        let r = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(&self.y).zip(&self.w).map(|((&e, &y), &w)| w * (y - logistic(e))),
        );
        let mut g = self.design.values.transpose() * r;
        for (j, gj) in g.iter_mut().enumerate() {
            *gj -= self.penalty[j] * beta[j];
        }
        g
    }

    /// One IRLS update: solve `(Xᵀ W X + Λ) β = Xᵀ W z` with working weights
    /// `W = w p (1 − p)` and working response `z = η + (y − p) / (p (1 − p))`.
    fn irls_step(&self, beta: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let x = &self.design.values;
        let eta = x * beta;
        let n = eta.len();
        let mut xw = x.clone();
        let mut wz = DVector::zeros(n);
        for i in 0..n {
            let p = logistic(eta[i]);
            let v = self.w[i] * p * (1.0 - p);
            for j in 0..x.ncols() {
                xw[(i, j)] *= v;
            }
            // W z without dividing by p (1 − p)
            wz[i] = v * eta[i] + self.w[i] * (self.y[i] - p);
        }
        let mut lhs: DMatrix<f64> = x.transpose() * &xw;
        for j in 0..lhs.ncols() {
            lhs[(j, j)] += self.penalty[j];
        }
        let rhs = x.transpose() * wz;
        let chol = lhs.cholesky().ok_or(ModelError::Singular)?;
        Ok(chol.solve(&rhs))
    }
}

fn intercept_index(design: &DesignMatrix) -> Option<usize> {
    design.columns.iter().position(|c| c == "(intercept)").or_else(|| {
        (0..design.ncols()).find(|&j| design.values.column(j).iter().all(|&v| v == 1.0))
    })
}

/// Fits a survey-weighted logistic regression by IRLS.
///
/// A run that exhausts `max_iter` returns a model with `converged = false`.
/// Once the score falls below tolerance one further IRLS update is applied,
/// which brings the solution to working precision.
pub fn fit_logistic(design: &DesignMatrix, options: &FitOptions) -> Result<RiskModel, ModelError> {
    match fit_with_penalty(design, options, 0.0) {
        Err(ModelError::Separation { .. }) if options.ridge_fallback.is_some() => {
            let lambda = options.ridge_fallback.unwrap();
            log::warn!("quasi-separation in `{}`; refitting with ridge penalty {lambda}", design.spec.name);
            fit_with_penalty(design, options, lambda)
        }
        other => other,
    }
}

fn fit_with_penalty(design: &DesignMatrix, options: &FitOptions, lambda: f64) -> Result<RiskModel, ModelError> {
    let (n, p) = (design.nrows(), design.ncols());
    if n <= p {
        return Err(ModelError::TooFewRows { rows: n, columns: p });
    }
    let total: f64 = design.weights.iter().sum();
    if !(total > 0.0) {
        return Err(ModelError::ZeroWeights);
    }
    let intercept = intercept_index(design);
    let mut penalty = vec![lambda; p];
    if let Some(j) = intercept {
        penalty[j] = 0.0;
    }
    let problem = Problem {
        design,
        w: design.weights.iter().map(|w| w / total).collect(),
        y: design.outcome.iter().map(|&y| f64::from(u8::from(y))).collect(),
        penalty,
    };

    let mut beta = DVector::zeros(p);
    if let Some(j) = intercept {
        let prev: f64 = problem.w.iter().zip(&problem.y).map(|(w, y)| w * y).sum();
        if prev > 0.0 && prev < 1.0 {
            beta[j] = (prev / (1.0 - prev)).ln();
        }
    }

    let mut iterations = 0;
    let mut grad_norm = problem.gradient(&beta).amax();
    let mut objective = problem.objective(&beta);
    while iterations < options.max_iter {
        let done = grad_norm <= options.tolerance;
        let proposal = problem.irls_step(&beta)?;
        // Step halving guards against the rare non-monotone Newton step.
        let mut candidate = proposal;
        let mut cand_obj = problem.objective(&candidate);
        let mut halvings = 0;
        while !(cand_obj >= objective - 1e-12 * objective.abs()) && halvings < 30 {
            candidate = (&beta + &candidate) * 0.5;
            cand_obj = problem.objective(&candidate);
            halvings += 1;
        }
        beta = candidate;
        objective = cand_obj;
        iterations += 1;
        grad_norm = problem.gradient(&beta).amax();

        let runaway = beta
            .iter()
            .enumerate()
            .find(|&(j, b)| !b.is_finite() || (Some(j) != intercept && b.abs() > options.coefficient_cap));
        if let Some((j, &b)) = runaway {
            if lambda == 0.0 || !b.is_finite() {
                return Err(ModelError::Separation { column: design.columns[j].clone(), value: b });
            }
        }
        if done {
            break;
        }
    }
    let converged = grad_norm <= options.tolerance;

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    Ok(RiskModel {
        spec: design.spec.clone(),
        columns: design.columns.clone(),
        log_likelihood: log_likelihood(design, &coefficients),
        coefficients,
        converged,
        iterations,
        final_gradient_norm: grad_norm,
        ridge: (lambda > 0.0).then_some(lambda),
        n_obs: n,
        weighted_n: total,
    })
}

/// Predicted risks `logistic(x · β)`, kept strictly inside (0, 1).
pub fn predict(model: &RiskModel, design: &DesignMatrix) -> Result<Vec<f64>, ModelError> {
    if design.columns != model.columns {
        return Err(ModelError::ColumnMismatch(format!(
            "design columns {:?} do not match model columns {:?}",
            design.columns, model.columns
        )));
    }
    if design.spec.scaling != model.spec.scaling {
        return Err(ModelError::ColumnMismatch("design was standardized with different constants".into()));
    }
    let eta = linear_predictor(design, &model.coefficients);
    let lo = f64::MIN_POSITIVE;
    let hi = 1.0 - f64::EPSILON / 2.0;
    Ok(eta.iter().map(|&e| logistic(e).clamp(lo, hi)).collect())
}
