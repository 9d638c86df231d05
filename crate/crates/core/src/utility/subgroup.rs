use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::report::{paired_scores, Sums};
use super::{decide, threshold_from_reward, RewardSpec, UtilityError};
use crate::ingest::{Cohort, Race};
use crate::model::RiskModel;

/// Cells lighter than this (in the cohort's weight units) are suppressed.
pub const MIN_CELL_WEIGHT: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubgroupParams {
    pub age_edges: Vec<f64>,
    pub bmi_edges: Vec<f64>,
    pub min_cell_weight: f64,
}

impl Default for SubgroupParams {
    fn default() -> Self {
        SubgroupParams {
            age_edges: vec![18.0, 30.0, 40.0, 50.0, 60.0, 70.0],
            bmi_edges: vec![18.5, 25.0, 30.0, 35.0, 40.0, 50.0],
            min_cell_weight: MIN_CELL_WEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCell {
    pub age_bin: (f64, f64),
    pub bmi_bin: (f64, f64),
    pub race: Race,
    pub n: usize,
    pub weighted_n: f64,
    /// `None` when the cell is suppressed.
    pub per_capita_gain: Option<f64>,
    pub concordance: Option<f64>,
    pub suppressed: bool,
}

fn check_edges(name: &str, edges: &[f64]) -> Result<(), UtilityError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(UtilityError::Bins(format!("{name} edges must be finite, strictly increasing, and at least two")));
    }
    Ok(())
}

/// Bins are `[lo, hi)` except the last, which is closed.
fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if x.is_nan() || x < edges[0] || x > edges[last] {
        return None;
    }
    Some((edges.partition_point(|&e| e <= x).saturating_sub(1)).min(last - 1))
}

/// Utility gain at `t = 1/r` within each (age bin, BMI bin, race) cell.
/// Empty cells are skipped; the rest appear in age, BMI, race order.
pub fn subgroup_summary(
    cohort: &Cohort,
    model_a: &RiskModel,
    model_b: &RiskModel,
    reward: &RewardSpec,
    params: &SubgroupParams,
) -> Result<Vec<SubgroupCell>, UtilityError> {
    check_edges("age", &params.age_edges)?;
    check_edges("BMI", &params.bmi_edges)?;
    let policy = threshold_from_reward(reward)?;
    let paired = paired_scores(model_a, model_b, cohort)?;
    let da = decide(&paired.scores_a, &policy);
    let db = decide(&paired.scores_b, &policy);

    let mut cells: BTreeMap<(usize, usize, Race), Sums> = BTreeMap::new();
    for (k, &i) in paired.record_index.iter().enumerate() {
        let rec = &cohort.records[i];
        let age = rec.age.map(f64::from).unwrap_or(f64::NAN);
        let bmi = rec.bmi.unwrap_or(f64::NAN);
        let (Some(a), Some(b)) = (bin_of(&params.age_edges, age), bin_of(&params.bmi_edges, bmi)) else {
            return Err(UtilityError::Bins(format!(
                "record {} (age {age}, BMI {bmi}) falls outside the subgroup bins",
                rec.id
            )));
        };
        cells.entry((a, b, paired.races[k])).or_default().add(da[k], db[k], paired.outcomes[k], paired.weights[k], reward.r);
    }

    Ok(cells
        .into_iter()
        .filter_map(|((a, b, race), sums)| {
            let g = sums.finish(reward)?;
            let suppressed = g.weighted_n < params.min_cell_weight;
            Some(SubgroupCell {
                age_bin: (params.age_edges[a], params.age_edges[a + 1]),
                bmi_bin: (params.bmi_edges[b], params.bmi_edges[b + 1]),
                race,
                n: g.n,
                weighted_n: g.weighted_n,
                per_capita_gain: (!suppressed).then_some(g.per_capita_gain),
                concordance: (!suppressed).then_some(g.concordance),
                suppressed,
            })
        })
        .collect())
}

pub fn subgroup_csv(cells: &[SubgroupCell]) -> Result<Vec<u8>, csv::Error> {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "age_lo", "age_hi", "bmi_lo", "bmi_hi", "race", "n", "weighted_n", "per_capita_gain", "concordance", "suppressed",
    ])?;
    for c in cells {
        w.write_record([
            c.age_bin.0.to_string(),
            c.age_bin.1.to_string(),
            c.bmi_bin.0.to_string(),
            c.bmi_bin.1.to_string(),
            c.race.to_string(),
            c.n.to_string(),
            c.weighted_n.to_string(),
            opt(c.per_capita_gain),
            opt(c.concordance),
            c.suppressed.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_lookup() {
        let e = [18.0, 30.0, 70.0];
        assert_eq!(bin_of(&e, 18.0), Some(0));
        assert_eq!(bin_of(&e, 29.9), Some(0));
        assert_eq!(bin_of(&e, 30.0), Some(1));
        assert_eq!(bin_of(&e, 70.0), Some(1));
        assert_eq!(bin_of(&e, 70.5), None);
        assert_eq!(bin_of(&e, f64::NAN), None);
    }

    #[test]
    fn edges_validated() {
        assert!(check_edges("age", &[1.0]).is_err());
        assert!(check_edges("age", &[1.0, 1.0]).is_err());
        assert!(check_edges("age", &[1.0, 2.0]).is_ok());
    }
}
