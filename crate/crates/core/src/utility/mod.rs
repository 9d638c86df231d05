//! Screening utility: cost of a screen is 1, detecting a diabetic patient is worth `r`.

mod curves;
mod report;
mod subgroup;

pub use curves::{histogram_to_csv, risk_distribution, utility_curve, utility_curves_to_csv, Histogram, UtilityCurve, UtilityPoint};
pub use report::{
    concordance, paired_scores, sensitivity_sweep, sweep_to_csv, table1_csv, utility_gain, utility_gain_paired,
    GroupUtility, PairedScores, PolicyDerivation, UtilityReport, DEFAULT_SWEEP_GRID, TABLE1_ORDER,
};
pub use subgroup::{subgroup_csv, subgroup_summary, SubgroupCell, SubgroupParams, MIN_CELL_WEIGHT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::CalibrationError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum UtilityError {
    #[error("invalid reward r = {0}: screening only pays off for r > 1")]
    InvalidReward(f64),
    #[error("dollars_per_util must be positive and finite, got {0}")]
    InvalidExchangeRate(f64),
    #[error("capacity fraction must lie in (0, 1], got {0}")]
    InvalidCapacity(f64),
    #[error("threshold must lie in [0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("input vectors differ in length ({0})")]
    LengthMismatch(String),
    #[error("weights sum to zero")]
    DegenerateWeights,
    #[error("invalid bins: {0}")]
    Bins(String),
    #[error("models `{0}` and `{1}` share no scorable records")]
    NoCommonRecords(String, String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// Default exchange rate: one util (one screening cost) is $100.
pub const DEFAULT_DOLLARS_PER_UTIL: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    /// Benefit of detecting one case, in units of the screening cost.
    pub r: f64,
    #[serde(default = "default_dollars")]
    pub dollars_per_util: Option<f64>,
}

fn default_dollars() -> Option<f64> {
    Some(DEFAULT_DOLLARS_PER_UTIL)
}

impl RewardSpec {
    pub fn new(r: f64) -> Self {
        RewardSpec { r, dollars_per_util: Some(DEFAULT_DOLLARS_PER_UTIL) }
    }

    /// Reward expressed relative to an arbitrary screening cost.
    pub fn from_cost_and_benefit(cost: f64, benefit: f64) -> Self {
        RewardSpec::new(benefit / cost)
    }

    pub fn with_r(self, r: f64) -> Self {
        RewardSpec { r, ..self }
    }

    pub fn validate(&self) -> Result<(), UtilityError> {
        if !(self.r.is_finite() && self.r > 1.0) {
            return Err(UtilityError::InvalidReward(self.r));
        }
        match self.dollars_per_util {
            Some(d) if !(d.is_finite() && d > 0.0) => Err(UtilityError::InvalidExchangeRate(d)),
            _ => Ok(()),
        }
    }

    pub fn to_dollars(&self, utils: f64) -> Option<f64> {
        self.dollars_per_util.map(|d| utils * d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    FixedThreshold,
    Capacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningPolicy {
    pub kind: PolicyKind,
    /// Patients whose risk strictly exceeds this value are screened.
    pub threshold: f64,
    pub capacity_fraction: Option<f64>,
}

impl ScreeningPolicy {
    pub fn fixed(threshold: f64) -> Result<Self, UtilityError> {
        if !(0.0..1.0).contains(&threshold) {
            return Err(UtilityError::InvalidThreshold(threshold));
        }
        Ok(ScreeningPolicy { kind: PolicyKind::FixedThreshold, threshold, capacity_fraction: None })
    }
}

/// Screen iff risk exceeds the point of indifference `1/r`.
pub fn threshold_from_reward(reward: &RewardSpec) -> Result<ScreeningPolicy, UtilityError> {
    reward.validate()?;
    ScreeningPolicy::fixed(1.0 / reward.r)
}

pub fn decide(scores: &[f64], policy: &ScreeningPolicy) -> Vec<bool> {
    scores.iter().map(|&s| s > policy.threshold).collect()
}

/// Lowest threshold that screens at most a weighted fraction `q` of the
/// population. Thresholds are placed at observed score levels, so ties at the
/// threshold are left unscreened; with `q = 1` everyone is screened.
pub fn capacity_threshold(scores: &[f64], weights: &[f64], q: f64) -> Result<ScreeningPolicy, UtilityError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(UtilityError::InvalidCapacity(q));
    }
    check_len(&[scores.len(), weights.len()])?;
    let mut levels: Vec<(f64, f64)> = scores
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&s, &w)| (s, w))
        .collect();
    if levels.is_empty() {
        return Err(UtilityError::DegenerateWeights);
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));

    // weight strictly above each distinct level, accumulated from the top
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    let mut above = 0.0;
    let mut k = levels.len();
    while k > 0 {
        let s = levels[k - 1].0;
        let mut level_weight = 0.0;
        while k > 0 && levels[k - 1].0 == s {
            level_weight += levels[k - 1].1;
            k -= 1;
        }
        distinct.push((s, above));
        above += level_weight;
    }
    let total = above;
    let budget = q * total;

    let threshold = if total <= budget {
        levels[0].0.next_down()
    } else {
        // distinct is in descending score order with nondecreasing weight above
        distinct.iter().take_while(|&&(_, above)| above <= budget).last().map(|&(s, _)| s).unwrap_or(levels[levels.len() - 1].0)
    };
    Ok(ScreeningPolicy { kind: PolicyKind::Capacity, threshold, capacity_fraction: Some(q) })
}

/// Per-capita utility of a set of screening decisions.
pub fn realized_utility(
    decisions: &[bool],
    outcomes: &[bool],
    weights: &[f64],
    reward: &RewardSpec,
) -> Result<f64, UtilityError> {
    check_len(&[decisions.len(), outcomes.len(), weights.len()])?;
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(UtilityError::DegenerateWeights);
    }
    let mut sum = 0.0;
    for ((&d, &y), &w) in decisions.iter().zip(outcomes).zip(weights) {
        if d {
            sum += w * payoff(y, reward.r);
        }
    }
    Ok(sum / total)
}

fn payoff(outcome: bool, r: f64) -> f64 {
    if outcome {
        r - 1.0
    } else {
        -1.0
    }
}

fn check_len(lens: &[usize]) -> Result<(), UtilityError> {
    if lens.windows(2).any(|w| w[0] != w[1]) {
        let joined: Vec<String> = lens.iter().map(|l| l.to_string()).collect();
        return Err(UtilityError::LengthMismatch(joined.join(" vs ")));
    }
    Ok(())
}
