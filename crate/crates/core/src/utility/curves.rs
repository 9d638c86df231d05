use serde::{Deserialize, Serialize};

use super::{check_len, RewardSpec, UtilityError};
use crate::calibrate::{smoothed_calibration_on_grid, Group, DEFAULT_GRID_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityPoint {
    pub score: f64,
    /// Expected per-person utility of screening someone with this score.
    pub utility: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityCurve {
    pub group: Group,
    pub r: f64,
    pub range: (f64, f64),
    pub points: Vec<UtilityPoint>,
}

/// Expected utility of screening as a function of score: `r * p(s) - 1`,
/// where `p` is the smoothed calibration curve on the default grid.
pub fn utility_curve(
    scores: &[f64],
    outcomes: &[bool],
    weights: &[f64],
    reward: &RewardSpec,
    range: (f64, f64),
    bandwidth: f64,
) -> Result<UtilityCurve, UtilityError> {
    reward.validate()?;
    let cal = smoothed_calibration_on_grid(scores, outcomes, weights, bandwidth, range, DEFAULT_GRID_POINTS)?;
    Ok(UtilityCurve {
        group: cal.group,
        r: reward.r,
        range,
        points: cal
            .points
            .iter()
            .map(|p| UtilityPoint { score: p.score, utility: reward.r * p.empirical - 1.0, mass: p.mass })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub group: Group,
    pub range: (f64, f64),
    /// Bin edges, `masses.len() + 1` of them.
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Weighted histogram of scores over equal-width bins; the last bin is closed.
pub fn risk_distribution(
    scores: &[f64],
    weights: &[f64],
    group: Group,
    range: (f64, f64),
    bins: usize,
) -> Result<Histogram, UtilityError> {
    check_len(&[scores.len(), weights.len()])?;
    if bins == 0 {
        return Err(UtilityError::Bins("at least one bin is required".into()));
    }
    if !(range.0.is_finite() && range.1.is_finite() && range.0 < range.1) {
        return Err(UtilityError::Bins(format!("invalid range [{}, {}]", range.0, range.1)));
    }
    let width = range.1 - range.0;
    let edges = (0..=bins).map(|k| range.0 + width * k as f64 / bins as f64).collect();
    let mut masses = vec![0.0; bins];
    for (&s, &w) in scores.iter().zip(weights) {
        if s >= range.0 && s <= range.1 {
            let k = (((s - range.0) / width * bins as f64) as usize).min(bins - 1);
            masses[k] += w;
        }
    }
    Ok(Histogram { group, range, edges, masses })
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, csv::Error> {
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// `model,group,lower,upper,mass` rows.
pub fn histogram_to_csv(hists: &[(String, Histogram)]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "group", "lower", "upper", "mass"])?;
    for (model, h) in hists {
        for (k, m) in h.masses.iter().enumerate() {
            w.write_record([
                model.clone(),
                h.group.to_string(),
                h.edges[k].to_string(),
                h.edges[k + 1].to_string(),
                m.to_string(),
            ])?;
        }
    }
    finish(w)
}

/// `model,group,r,score,utility,mass` rows.
pub fn utility_curves_to_csv(curves: &[(String, UtilityCurve)]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "group", "r", "score", "utility", "mass"])?;
    for (model, c) in curves {
        for p in &c.points {
            w.write_record([
                model.clone(),
                c.group.to_string(),
                c.r.to_string(),
                p.score.to_string(),
                p.utility.to_string(),
                p.mass.to_string(),
            ])?;
        }
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::smoothed_calibration;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn curve_is_affine_image_of_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scores: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..0.06)).collect();
        let outcomes: Vec<bool> = scores.iter().map(|&s| rng.gen_bool(s)).collect();
        let weights: Vec<f64> = (0..400).map(|_| rng.gen_range(0.5..3.0)).collect();
        let reward = RewardSpec::new(70.0);
        let u = utility_curve(&scores, &outcomes, &weights, &reward, (0.0, 0.05), 0.008).unwrap();
        let c = smoothed_calibration(&scores, &outcomes, &weights, 0.008, (0.0, 0.05)).unwrap();
        for (p, q) in u.points.iter().zip(&c.points) {
            assert_eq!(p.score, q.score);
            assert_eq!(p.utility, 70.0 * q.empirical - 1.0);
        }
    }

    #[test]
    fn all_negative_outcomes_give_minus_one() {
        let scores: Vec<f64> = (0..50).map(|i| i as f64 / 1000.0).collect();
        let u = utility_curve(&scores, &[false; 50], &[1.0; 50], &RewardSpec::new(70.0), (0.0, 0.05), 0.01).unwrap();
        assert!(u.points.iter().all(|p| p.utility == -1.0));
    }

    #[test]
    fn histogram_single_value_and_mass() {
        let h = risk_distribution(&[0.02; 5], &[1.0, 2.0, 3.0, 4.0, 5.0], Group::All, (0.0, 0.05), 10).unwrap();
        assert_eq!(h.masses.iter().filter(|&&m| m > 0.0).count(), 1);
        assert_eq!(h.total(), 15.0);
        assert_eq!(h.edges.len(), 11);

        let h = risk_distribution(&[0.05, 0.0, 0.7], &[1.0; 3], Group::All, (0.0, 0.05), 5).unwrap();
        assert_eq!((h.masses[0], h.masses[4], h.total()), (1.0, 1.0, 2.0));
    }

    #[test]
    fn uniform_scores_spread_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.05)).collect();
        let h = risk_distribution(&scores, &vec![1.0; n], Group::All, (0.0, 0.05), 10).unwrap();
        let expected = n as f64 / 10.0;
        let chi2: f64 = h.masses.iter().map(|m| (m - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-square with 9 degrees of freedom
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn bad_bins() {
        assert!(risk_distribution(&[0.1], &[1.0], Group::All, (0.0, 0.05), 0).is_err());
    }
}
