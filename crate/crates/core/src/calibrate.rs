//! Predicted-versus-observed risk curves, overall and by race/ethnicity group.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Cohort, Race};
use crate::model::{ModelError, RiskModel};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("input vectors differ in length ({0})")]
    LengthMismatch(String),
    #[error("invalid score range [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("bins must be at least 1")]
    InvalidBins,
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("no records fall inside the score range")]
    EmptyCurve,
    #[error("only {0:.1} effective records in range; at least 10 needed for smoothing")]
    InsufficientData(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Reporting group: everyone, or one race/ethnicity category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    All,
    Race(Race),
}

impl Group {
    /// `All` followed by the four reported race groups.
    pub fn reported() -> Vec<Group> {
        std::iter::once(Group::All).chain(Race::REPORTED.into_iter().map(Group::Race)).collect()
    }

    pub fn contains(self, race: Race) -> bool {
        match self {
            Group::All => true,
            Group::Race(r) => r == race,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::All => f.write_str("All"),
            Group::Race(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMethod {
    Binned,
    Smoothed,
}

impl fmt::Display for CurveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveMethod::Binned => "binned",
            CurveMethod::Smoothed => "smoothed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub score: f64,
    pub empirical: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub group: Group,
    pub method: CurveMethod,
    pub range: (f64, f64),
    pub points: Vec<CalibrationPoint>,
}

impl CalibrationCurve {
    /// Linear interpolation of the empirical rate at `score`; `None` outside
    /// the span of the points.
    pub fn empirical_at(&self, score: f64) -> Option<f64> {
        let pts = &self.points;
        let first = pts.first()?;
        if score < first.score || score > pts.last()?.score {
            return None;
        }
        if pts.len() == 1 {
            return Some(first.empirical);
        }
        let k = pts.partition_point(|p| p.score < score).clamp(1, pts.len() - 1);
        let (a, b) = (pts[k - 1], pts[k]);
        if b.score == a.score {
            return Some(a.empirical);
        }
        let t = (score - a.score) / (b.score - a.score);
        Some(a.empirical + t * (b.empirical - a.empirical))
    }
}

/// How bin edges are placed for binned curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    #[default]
    EqualWidth,
    /// Edges at weighted quantiles of the in-range scores.
    Quantile,
}

fn check_inputs(scores: &[f64], outcomes: &[bool], weights: &[f64], range: (f64, f64)) -> Result<(), CalibrationError> {
    if scores.len() != outcomes.len() || scores.len() != weights.len() {
        return Err(CalibrationError::LengthMismatch(format!(
            "scores {}, outcomes {}, weights {}",
            scores.len(),
            outcomes.len(),
            weights.len()
        )));
    }
    if !(range.0.is_finite() && range.1.is_finite() && range.0 < range.1) {
        return Err(CalibrationError::InvalidRange(range.0, range.1));
    }
    Ok(())
}

fn in_range(s: f64, range: (f64, f64)) -> bool {
    s >= range.0 && s <= range.1
}

#[derive(Default, Clone, Copy)]
struct BinAcc {
    mass: f64,
    score: f64,
    events: f64,
    count: usize,
}

fn assemble(bins: Vec<BinAcc>) -> Vec<CalibrationPoint> {
    bins.into_iter()
        .filter(|b| b.count > 0 && b.mass > 0.0)
        .map(|b| CalibrationPoint { score: b.score / b.mass, empirical: b.events / b.mass, mass: b.mass })
        .collect()
}

/// Equal-width bins over `range`; each point is (weighted mean score,
/// weighted outcome rate, weighted mass). Empty bins are omitted.
pub fn binned_calibration(
    scores: &[f64],
    outcomes: &[bool],
    weights: &[f64],
    bins: usize,
    range: (f64, f64),
) -> Result<CalibrationCurve, CalibrationError> {
    binned_calibration_with(scores, outcomes, weights, bins, range, Binning::EqualWidth)
}

pub fn binned_calibration_with(
    scores: &[f64],
    outcomes: &[bool],
    weights: &[f64],
    bins: usize,
    range: (f64, f64),
    binning: Binning,
) -> Result<CalibrationCurve, CalibrationError> {
    check_inputs(scores, outcomes, weights, range)?;
    if bins == 0 {
        return Err(CalibrationError::InvalidBins);
    }
    let members: Vec<usize> = (0..scores.len()).filter(|&i| in_range(scores[i], range)).collect();
    if members.is_empty() {
        return Err(CalibrationError::EmptyCurve);
    }

    let assignment: Vec<usize> = match binning {
        Binning::EqualWidth => members
            .iter()
            .map(|&i| {
                let t = (scores[i] - range.0) / (range.1 - range.0);
                ((t * bins as f64) as usize).min(bins - 1)
            })
            .collect(),
        Binning::Quantile => quantile_assignment(scores, weights, &members, bins),
    };

    let mut acc = vec![BinAcc::default(); bins];
    for (&i, &b) in members.iter().zip(&assignment) {
        let a = &mut acc[b];
        let w = weights[i];
        a.mass += w;
        a.score += w * scores[i];
        if outcomes[i] {
            a.events += w;
        }
        a.count += 1;
    }
    Ok(CalibrationCurve { group: Group::All, method: CurveMethod::Binned, range, points: assemble(acc) })
}

/// Bin index per member such that bins hold roughly equal weighted mass and
/// tied scores share a bin.
fn quantile_assignment(scores: &[f64], weights: &[f64], members: &[usize], bins: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| scores[members[a]].total_cmp(&scores[members[b]]));
    let total: f64 = members.iter().map(|&i| weights[i]).sum();
    let mut out = vec![0; members.len()];
    let mut cum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[members[order[k]]];
        let bin = if total > 0.0 { ((cum / total * bins as f64) as usize).min(bins - 1) } else { 0 };
        while k < order.len() && scores[members[order[k]]] == s {
            out[order[k]] = bin;
            cum += weights[members[order[k]]];
            k += 1;
        }
    }
    out
}

/// Default number of evaluation points for smoothed curves.
pub const DEFAULT_GRID_POINTS: usize = 101;

/// Kish effective sample size of the in-range records.
fn effective_n(scores: &[f64], weights: &[f64], range: (f64, f64)) -> f64 {
    let (mut s1, mut s2) = (0.0, 0.0);
    for (&s, &w) in scores.iter().zip(weights) {
        if in_range(s, range) {
            s1 += w;
            s2 += w * w;
        }
    }
    if s2 > 0.0 {
        s1 * s1 / s2
    } else {
        0.0
    }
}

/// Gaussian-kernel local-linear estimate of `E[y | x = x0]` and the local kernel mass.
pub fn local_linear(xs: &[f64], ys: &[f64], ws: &[f64], x0: f64, bandwidth: f64) -> (f64, f64) {
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        let d = x - x0;
        let u = d / bandwidth;
        let k = w * (-0.5 * u * u).exp();
        s0 += k;
        s1 += k * d;
        s2 += k * d * d;
        t0 += k * y;
        t1 += k * d * y;
    }
    let det = s0 * s2 - s1 * s1;
    let est = if det > 1e-12 * s0 * s2 && det > 0.0 {
        (s2 * t0 - s1 * t1) / det
    } else if s0 > 0.0 {
        t0 / s0
    } else {
        f64::NAN
    };
    (est, s0)
}

/// Local-linear weighted regression of outcome on score, evaluated on
/// `grid_points` evenly spaced scores across `range` and clipped to [0, 1].
/// All records contribute to the kernel sums; at least 10 effective
/// records must lie inside the range.
pub fn smoothed_calibration(
    scores: &[f64],
    outcomes: &[bool],
    weights: &[f64],
    bandwidth: f64,
    range: (f64, f64),
) -> Result<CalibrationCurve, CalibrationError> {
    smoothed_calibration_on_grid(scores, outcomes, weights, bandwidth, range, DEFAULT_GRID_POINTS)
}

pub fn smoothed_calibration_on_grid(
    scores: &[f64],
    outcomes: &[bool],
    weights: &[f64],
    bandwidth: f64,
    range: (f64, f64),
    grid_points: usize,
) -> Result<CalibrationCurve, CalibrationError> {
    check_inputs(scores, outcomes, weights, range)?;
    if !(bandwidth > 0.0) {
        return Err(CalibrationError::InvalidBandwidth(bandwidth));
    }
    if grid_points == 0 {
        return Err(CalibrationError::InvalidBins);
    }
    let n_eff = effective_n(scores, weights, range);
    if n_eff < 10.0 {
        return Err(CalibrationError::InsufficientData(n_eff));
    }
    let ys: Vec<f64> = outcomes.iter().map(|&y| f64::from(u8::from(y))).collect();
    let points = (0..grid_points)
        .map(|k| {
            let x0 = if grid_points == 1 {
                0.5 * (range.0 + range.1)
            } else {
                range.0 + (range.1 - range.0) * k as f64 / (grid_points - 1) as f64
            };
            let (est, mass) = local_linear(scores, &ys, weights, x0, bandwidth);
            CalibrationPoint { score: x0, empirical: est.clamp(0.0, 1.0), mass }
        })
        .collect();
    Ok(CalibrationCurve { group: Group::All, method: CurveMethod::Smoothed, range, points })
}

/// Parameters shared by every group's curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationParams {
    pub range: (f64, f64),
    pub bins: usize,
    pub binning: Binning,
    pub bandwidth: f64,
    pub grid_points: usize,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            range: (0.0, 0.05),
            bins: 10,
            binning: Binning::EqualWidth,
            bandwidth: 0.01,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

/// Curve for one subset of already-scored records.
pub fn curve_for(
    group: Group,
    scores: &[f64],
    outcomes: &[bool],
    weights: &[f64],
    method: CurveMethod,
    params: &CalibrationParams,
) -> Result<CalibrationCurve, CalibrationError> {
    let mut curve = match method {
        CurveMethod::Binned => {
            binned_calibration_with(scores, outcomes, weights, params.bins, params.range, params.binning)?
        }
        CurveMethod::Smoothed => {
            smoothed_calibration_on_grid(scores, outcomes, weights, params.bandwidth, params.range, params.grid_points)?
        }
    };
    curve.group = group;
    Ok(curve)
}

/// One curve for `All` and one per reported race group. Groups whose curve
/// cannot be computed are skipped and named in the returned warnings.
pub fn group_calibration(
    cohort: &Cohort,
    model: &RiskModel,
    method: CurveMethod,
    params: &CalibrationParams,
) -> Result<(Vec<CalibrationCurve>, Vec<String>), CalibrationError> {
    let (design, risks) = model.predict_cohort(cohort)?;
    let races: Vec<Race> = design.row_index.iter().map(|&i| cohort.records[i].group()).collect();
    let mut curves = Vec::new();
    let mut warnings = Vec::new();
    for group in Group::reported() {
        let idx: Vec<usize> = (0..risks.len()).filter(|&i| group.contains(races[i])).collect();
        let pick = |v: &dyn Fn(usize) -> f64| idx.iter().map(|&i| v(i)).collect::<Vec<f64>>();
        let s = pick(&|i| risks[i]);
        let w = pick(&|i| design.weights[i]);
        let y: Vec<bool> = idx.iter().map(|&i| design.outcome[i]).collect();
        match curve_for(group, &s, &y, &w, method, params) {
            Ok(c) => curves.push(c),
            Err(e @ (CalibrationError::EmptyCurve | CalibrationError::InsufficientData(_))) => {
                let msg = format!("model `{}`, group {group}: {e}; skipped", model.spec.name);
                log::warn!("{msg}");
                warnings.push(msg);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((curves, warnings))
}

pub const CURVE_CSV_HEADER: [&str; 5] = ["group", "method", "score", "empirical", "mass"];

pub fn curves_to_csv(curves: &[CalibrationCurve]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_CSV_HEADER)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.group.to_string(),
                c.method.to_string(),
                p.score.to_string(),
                p.empirical.to_string(),
                p.mass.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_record_hand_example() {
        let c = binned_calibration(
            &[0.01, 0.01, 0.03, 0.03],
            &[true, false, false, true],
            &[1.0; 4],
            2,
            (0.0, 0.05),
        )
        .unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!((c.points[0].score, c.points[0].empirical, c.points[0].mass), (0.01, 0.5, 2.0));
        assert_eq!((c.points[1].score, c.points[1].empirical, c.points[1].mass), (0.03, 0.5, 2.0));
    }

    #[test]
    fn constant_score_lands_on_diagonal() {
        let n = 1000;
        let scores = vec![0.01; n];
        // weighted rate exactly 0.01: one event carrying 1% of the weight
        let mut outcomes = vec![false; n];
        outcomes[0] = true;
        let mut weights = vec![1.0; n];
        weights[0] = 999.0 / 99.0;
        let c = binned_calibration(&scores, &outcomes, &weights, 10, (0.0, 0.05)).unwrap();
        assert_eq!(c.points.len(), 1);
        assert!((c.points[0].empirical - 0.01).abs() < 1e-15);
        assert!((c.points[0].score - 0.01).abs() < 1e-15);
    }

    #[test]
    fn upper_edge_goes_in_last_bin_and_out_of_range_is_dropped() {
        let c = binned_calibration(&[0.05, 0.2, -0.1], &[true, true, true], &[1.0; 3], 5, (0.0, 0.05)).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.points[0].mass, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            binned_calibration(&[0.5], &[true], &[1.0], 2, (0.0, 0.05)),
            Err(CalibrationError::EmptyCurve)
        ));
        assert!(matches!(
            binned_calibration(&[0.5], &[true, false], &[1.0], 2, (0.0, 0.05)),
            Err(CalibrationError::LengthMismatch(_))
        ));
        assert!(matches!(
            binned_calibration(&[0.5], &[true], &[1.0], 2, (0.05, 0.05)),
            Err(CalibrationError::InvalidRange(..))
        ));
        assert!(matches!(
            smoothed_calibration(&[0.01; 5], &[true; 5], &[1.0; 5], 0.01, (0.0, 0.05)),
            Err(CalibrationError::InsufficientData(_))
        ));
        assert!(matches!(
            smoothed_calibration(&[0.01; 50], &[true; 50], &[1.0; 50], 0.0, (0.0, 0.05)),
            Err(CalibrationError::InvalidBandwidth(_))
        ));
    }

    #[test]
    fn all_zero_outcomes_smooth_to_zero() {
        let scores: Vec<f64> = (0..200).map(|i| i as f64 * 0.0003).collect();
        let c = smoothed_calibration(&scores, &[false; 200], &[1.0; 200], 0.01, (0.0, 0.05)).unwrap();
        assert_eq!(c.points.len(), DEFAULT_GRID_POINTS);
        assert!(c.points.iter().all(|p| p.empirical == 0.0));
    }

    #[test]
    fn local_linear_reproduces_lines_exactly() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.2 + 0.1 * x).collect();
        let ws = vec![1.0; 30];
        for x0 in [0.0, 1.3, 2.9] {
            let (est, _) = local_linear(&xs, &ys, &ws, x0, 0.5);
            assert!((est - (0.2 + 0.1 * x0)).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_bins_keep_ties_together() {
        let scores = [0.01, 0.01, 0.01, 0.02, 0.03, 0.04];
        let c = binned_calibration_with(&scores, &[false; 6], &[1.0; 6], 3, (0.0, 0.05), Binning::Quantile).unwrap();
        assert_eq!(c.points[0].mass, 3.0);
        let total: f64 = c.points.iter().map(|p| p.mass).sum();
        assert_eq!(total, 6.0);
    }

    #[test]
    fn interpolation() {
        let c = binned_calibration(&[0.01, 0.03], &[false, true], &[1.0, 1.0], 2, (0.0, 0.05)).unwrap();
        assert!((c.empirical_at(0.02).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(c.empirical_at(0.04), None);
    }

    #[test]
    fn csv_layout() {
        let c = binned_calibration(&[0.01], &[true], &[2.0], 1, (0.0, 0.05)).unwrap();
        let s = String::from_utf8(curves_to_csv(&[c]).unwrap()).unwrap();
        assert_eq!(s, "group,method,score,empirical,mass\nAll,binned,0.01,1,2\n");
    }
}
