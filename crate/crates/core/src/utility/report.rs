use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{capacity_threshold, check_len, decide, payoff, threshold_from_reward, RewardSpec, ScreeningPolicy, UtilityError};
use crate::calibrate::Group;
use crate::ingest::{Cohort, Race};
use crate::model::RiskModel;

/// Reward grid used when none is configured.
pub const DEFAULT_SWEEP_GRID: [f64; 20] = [
    10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0, 130.0, 140.0, 150.0, 160.0, 170.0,
    180.0, 190.0, 200.0,
];

/// Row order of the per-group gain table.
pub const TABLE1_ORDER: [Race; 4] = [Race::Asian, Race::White, Race::Hispanic, Race::Black];

/// How each model's screening threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyDerivation {
    /// Screen above `1/r`.
    Indifference,
    /// Screen the riskiest fraction `q` of the weighted population under each model.
    Capacity { q: f64 },
    Fixed { threshold: f64 },
}

impl PolicyDerivation {
    fn policy(&self, scores: &[f64], weights: &[f64], reward: &RewardSpec) -> Result<ScreeningPolicy, UtilityError> {
        match *self {
            PolicyDerivation::Indifference => threshold_from_reward(reward),
            PolicyDerivation::Capacity { q } => capacity_threshold(scores, weights, q),
            PolicyDerivation::Fixed { threshold } => ScreeningPolicy::fixed(threshold),
        }
    }
}

/// Both models' risk predictions on the records they can both score.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    pub model_a: String,
    pub model_b: String,
    pub record_index: Vec<usize>,
    pub scores_a: Vec<f64>,
    pub scores_b: Vec<f64>,
    pub outcomes: Vec<bool>,
    pub weights: Vec<f64>,
    pub races: Vec<Race>,
    /// Cohort records that at least one model could not score.
    pub excluded: usize,
}

pub fn paired_scores(model_a: &RiskModel, model_b: &RiskModel, cohort: &Cohort) -> Result<PairedScores, UtilityError> {
    let (da, ra) = model_a.predict_cohort(cohort)?;
    let (db, rb) = model_b.predict_cohort(cohort)?;
    let mut out = PairedScores {
        model_a: model_a.spec.name.clone(),
        model_b: model_b.spec.name.clone(),
        record_index: Vec::new(),
        scores_a: Vec::new(),
        scores_b: Vec::new(),
        outcomes: Vec::new(),
        weights: Vec::new(),
        races: Vec::new(),
        excluded: 0,
    };
    let (mut i, mut j) = (0, 0);
    while i < da.row_index.len() && j < db.row_index.len() {
        let (x, y) = (da.row_index[i], db.row_index[j]);
        if x < y {
            i += 1;
        } else if y < x {
            j += 1;
        } else {
            let rec = &cohort.records[x];
            out.record_index.push(x);
            out.scores_a.push(ra[i]);
            out.scores_b.push(rb[j]);
            out.outcomes.push(rec.outcome());
            out.weights.push(rec.weight_survey);
            out.races.push(rec.group());
            i += 1;
            j += 1;
        }
    }
    out.excluded = cohort.records.len() - out.record_index.len();
    if out.record_index.is_empty() {
        return Err(UtilityError::NoCommonRecords(out.model_a, out.model_b));
    }
    if out.excluded > 0 {
        log::warn!("{} cohort records could not be scored by both `{}` and `{}`", out.excluded, out.model_a, out.model_b);
    }
    Ok(out)
}

/// Gain of policy A over policy B within one (sub)population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupUtility {
    pub per_capita_gain: f64,
    pub per_capita_gain_dollars: Option<f64>,
    pub concordance: f64,
    pub weighted_n: f64,
    pub utility_a: f64,
    pub utility_b: f64,
    /// The same quantities with every record counted once.
    pub unweighted_gain: f64,
    pub unweighted_concordance: f64,
    pub n: usize,
}

/// Compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(super) struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    pub(super) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(super) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Default)]
pub(super) struct Sums {
    w: Neumaier,
    gain: Neumaier,
    agree: Neumaier,
    ua: f64,
    ub: f64,
    n: usize,
    n_gain: f64,
    n_agree: usize,
}

impl Sums {
    pub(super) fn add(&mut self, a: bool, b: bool, y: bool, w: f64, r: f64) {
        let p = payoff(y, r);
        self.w.add(w);
        self.n += 1;
        if a {
            self.ua += w * p;
        }
        if b {
            self.ub += w * p;
        }
        match (a, b) {
            (true, false) => {
                self.gain.add(w * p);
                self.n_gain += p;
            }
            (false, true) => {
                self.gain.add(-(w * p));
                self.n_gain -= p;
            }
            _ => {
                self.agree.add(w);
                self.n_agree += 1;
            }
        }
    }

    pub(super) fn finish(&self, reward: &RewardSpec) -> Option<GroupUtility> {
        let total = self.w.value();
        if total <= 0.0 || self.n == 0 {
            return None;
        }
        let gain = self.gain.value() / total;
        Some(GroupUtility {
            per_capita_gain: gain,
            per_capita_gain_dollars: reward.to_dollars(gain),
            concordance: self.agree.value() / total,
            weighted_n: total,
            utility_a: self.ua / total,
            utility_b: self.ub / total,
            unweighted_gain: self.n_gain / self.n as f64,
            unweighted_concordance: self.n_agree as f64 / self.n as f64,
            n: self.n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub model_a: String,
    pub model_b: String,
    pub r: f64,
    pub dollars_per_util: Option<f64>,
    pub derivation: PolicyDerivation,
    pub policy_a: ScreeningPolicy,
    pub policy_b: ScreeningPolicy,
    pub overall: GroupUtility,
    pub per_group: BTreeMap<Race, GroupUtility>,
    /// Overall per-capita gain times the weighted population size.
    pub aggregate_gain: f64,
    pub aggregate_gain_dollars: Option<f64>,
    pub excluded_records: usize,
    pub warnings: Vec<String>,
}

impl UtilityReport {
    pub fn group(&self, group: Group) -> Option<&GroupUtility> {
        match group {
            Group::All => Some(&self.overall),
            Group::Race(r) => self.per_group.get(&r),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-capita gain of screening with model A's predictions over model B's,
/// overall and within each race group (Other included).
pub fn utility_gain(
    model_a: &RiskModel,
    model_b: &RiskModel,
    cohort: &Cohort,
    derivation: PolicyDerivation,
    reward: &RewardSpec,
) -> Result<UtilityReport, UtilityError> {
    let paired = paired_scores(model_a, model_b, cohort)?;
    utility_gain_paired(&paired, derivation, reward)
}

pub fn utility_gain_paired(
    paired: &PairedScores,
    derivation: PolicyDerivation,
    reward: &RewardSpec,
) -> Result<UtilityReport, UtilityError> {
    reward.validate()?;
    let p = paired;
    check_len(&[p.scores_a.len(), p.scores_b.len(), p.outcomes.len(), p.weights.len(), p.races.len()])?;
    let policy_a = derivation.policy(&p.scores_a, &p.weights, reward)?;
    let policy_b = derivation.policy(&p.scores_b, &p.weights, reward)?;
    let da = decide(&p.scores_a, &policy_a);
    let db = decide(&p.scores_b, &policy_b);

    let mut overall = Sums::default();
    let mut groups: BTreeMap<Race, Sums> = BTreeMap::new();
    for i in 0..da.len() {
        let (w, y) = (p.weights[i], p.outcomes[i]);
        overall.add(da[i], db[i], y, w, reward.r);
        groups.entry(p.races[i]).or_default().add(da[i], db[i], y, w, reward.r);
    }
    let overall = overall.finish(reward).ok_or(UtilityError::DegenerateWeights)?;

    let mut warnings = Vec::new();
    let mut per_group = BTreeMap::new();
    for race in Race::ALL {
        match groups.get(&race).and_then(|s| s.finish(reward)) {
            Some(g) => {
                per_group.insert(race, g);
            }
            None => warnings.push(format!("group {race} has no weighted records; omitted")),
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let aggregate_gain = overall.per_capita_gain * overall.weighted_n;
    Ok(UtilityReport {
        model_a: p.model_a.clone(),
        model_b: p.model_b.clone(),
        r: reward.r,
        dollars_per_util: reward.dollars_per_util,
        derivation,
        policy_a,
        policy_b,
        overall,
        per_group,
        aggregate_gain,
        aggregate_gain_dollars: reward.to_dollars(aggregate_gain),
        excluded_records: p.excluded,
        warnings,
    })
}

/// Weighted fraction of records with the same decision, for `All` and each
/// race group present. Groups without weight are omitted and reported.
pub fn concordance(
    decisions_a: &[bool],
    decisions_b: &[bool],
    weights: &[f64],
    groups: &[Race],
) -> Result<(BTreeMap<Group, f64>, Vec<String>), UtilityError> {
    check_len(&[decisions_a.len(), decisions_b.len(), weights.len(), groups.len()])?;
    let mut sums: BTreeMap<Group, (f64, f64)> = BTreeMap::new();
    for g in std::iter::once(Group::All).chain(Race::ALL.into_iter().map(Group::Race)) {
        sums.insert(g, (0.0, 0.0));
    }
    for i in 0..weights.len() {
        for g in [Group::All, Group::Race(groups[i])] {
            let e = sums.get_mut(&g).expect("all groups seeded");
            e.0 += weights[i];
            if decisions_a[i] == decisions_b[i] {
                e.1 += weights[i];
            }
        }
    }
    let mut out = BTreeMap::new();
    let mut warnings = Vec::new();
    for (g, (w, agree)) in sums {
        if w > 0.0 {
            out.insert(g, agree / w);
        } else {
            warnings.push(format!("group {g} is empty; concordance omitted"));
        }
    }
    Ok((out, warnings))
}

/// One report per reward in `r_grid`, each with threshold `1/r`, in grid order.
pub fn sensitivity_sweep(
    model_a: &RiskModel,
    model_b: &RiskModel,
    cohort: &Cohort,
    reward: &RewardSpec,
    r_grid: &[f64],
) -> Result<Vec<(f64, UtilityReport)>, UtilityError> {
    for &r in r_grid {
        reward.with_r(r).validate()?;
    }
    let paired = paired_scores(model_a, model_b, cohort)?;
    r_grid
        .iter()
        .map(|&r| Ok((r, utility_gain_paired(&paired, PolicyDerivation::Indifference, &reward.with_r(r))?)))
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn group_fields(g: &GroupUtility) -> Vec<String> {
    vec![
        g.per_capita_gain.to_string(),
        opt(g.per_capita_gain_dollars),
        g.concordance.to_string(),
        g.weighted_n.to_string(),
        g.unweighted_gain.to_string(),
        g.unweighted_concordance.to_string(),
        g.n.to_string(),
    ]
}

const GROUP_HEADER: [&str; 7] =
    ["per_capita_gain", "dollars", "concordance", "weighted_n", "unweighted_gain", "unweighted_concordance", "n"];

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, csv::Error> {
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// Per-group gains for Asian, White, Hispanic and Black, then the overall row.
pub fn table1_csv(report: &UtilityReport) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("group").chain(GROUP_HEADER))?;
    for race in TABLE1_ORDER {
        if let Some(g) = report.per_group.get(&race) {
            w.write_record(std::iter::once(race.to_string()).chain(group_fields(g)))?;
        }
    }
    w.write_record(std::iter::once("All".to_string()).chain(group_fields(&report.overall)))?;
    finish_csv(w)
}

pub fn sweep_to_csv(sweep: &[(f64, UtilityReport)]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", "threshold", "group"].into_iter().chain(GROUP_HEADER))?;
    for (r, report) in sweep {
        let rows = std::iter::once((Group::All, &report.overall))
            .chain(report.per_group.iter().map(|(race, g)| (Group::Race(*race), g)));
        for (group, g) in rows {
            let head = [r.to_string(), report.policy_a.threshold.to_string(), group.to_string()];
            w.write_record(head.into_iter().chain(group_fields(g)))?;
        }
    }
    finish_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paired(scores_a: Vec<f64>, scores_b: Vec<f64>, outcomes: Vec<bool>, weights: Vec<f64>, races: Vec<Race>) -> PairedScores {
        PairedScores {
            model_a: "a".into(),
            model_b: "b".into(),
            record_index: (0..scores_a.len()).collect(),
            scores_a,
            scores_b,
            outcomes,
            weights,
            races,
            excluded: 0,
        }
    }

    fn six() -> PairedScores {
        // t = 1/70 ≈ 0.0143; records straddle it in both directions
        paired(
            vec![0.02, 0.02, 0.01, 0.03, 0.001, 0.5],
            vec![0.01, 0.01, 0.02, 0.03, 0.002, 0.4],
            vec![true, false, false, true, false, true],
            vec![1.0, 2.0, 3.0, 1.5, 0.5, 2.0],
            vec![Race::Asian, Race::Asian, Race::White, Race::White, Race::Black, Race::Other],
        )
    }

    #[test]
    fn six_record_brute_force() {
        let p = six();
        let rep = utility_gain_paired(&p, PolicyDerivation::Indifference, &RewardSpec::new(70.0)).unwrap();
        // screened only under A: rows 0 (case) and 1; only under B: row 2
        let expected = (1.0 * 69.0 + 2.0 * -1.0 - 3.0 * -1.0) / 10.0;
        assert!((rep.overall.per_capita_gain - expected).abs() < 1e-15);
        assert_eq!(rep.per_group[&Race::Asian].per_capita_gain, (69.0 - 2.0) / 3.0);
        assert_eq!(rep.per_group[&Race::White].per_capita_gain, 3.0 / 4.5);
        assert_eq!(rep.per_group[&Race::Black].per_capita_gain, 0.0);
        assert_eq!(rep.per_group[&Race::Asian].concordance, 0.0);
        assert_eq!(rep.per_group[&Race::White].concordance, 1.5 / 4.5);
        assert_eq!(rep.overall.per_capita_gain_dollars, Some(expected * 100.0));
        assert!((rep.aggregate_gain - expected * 10.0).abs() < 1e-12);
        assert!(!rep.per_group.contains_key(&Race::Hispanic));
        assert_eq!(rep.warnings.len(), 1);

        let ua = rep.overall.utility_a;
        let ub = rep.overall.utility_b;
        assert!((ua - ub - rep.overall.per_capita_gain).abs() < 1e-14);
    }

    #[test]
    fn groups_aggregate_to_overall() {
        let rep = utility_gain_paired(&six(), PolicyDerivation::Indifference, &RewardSpec::new(70.0)).unwrap();
        let total: f64 = rep.per_group.values().map(|g| g.weighted_n).sum();
        let avg: f64 = rep.per_group.values().map(|g| g.weighted_n / total * g.per_capita_gain).sum();
        assert!((avg - rep.overall.per_capita_gain).abs() < 1e-12);
    }

    #[test]
    fn self_gain_is_zero() {
        let mut p = six();
        p.scores_b = p.scores_a.clone();
        for d in [PolicyDerivation::Indifference, PolicyDerivation::Capacity { q: 0.5 }] {
            let rep = utility_gain_paired(&p, d, &RewardSpec::new(70.0)).unwrap();
            assert_eq!(rep.overall.per_capita_gain, 0.0);
            assert_eq!(rep.overall.concordance, 1.0);
            assert!(rep.per_group.values().all(|g| g.per_capita_gain == 0.0 && g.concordance == 1.0));
        }
    }

    #[test]
    fn low_reward_screens_nobody() {
        let mut p = six();
        p.scores_a.iter_mut().chain(p.scores_b.iter_mut()).for_each(|s| *s = s.min(0.4));
        let rep = utility_gain_paired(&p, PolicyDerivation::Indifference, &RewardSpec::new(2.0)).unwrap();
        assert_eq!(rep.overall.per_capita_gain, 0.0);
        assert_eq!(rep.overall.utility_a, 0.0);
    }

    #[test]
    fn concordance_examples() {
        let (c, w) = concordance(&[true, false], &[true, true], &[1.0, 1.0], &[Race::White, Race::White]).unwrap();
        assert_eq!(c[&Group::Race(Race::White)], 0.5);
        assert_eq!(c[&Group::All], 0.5);
        assert!(!c.contains_key(&Group::Race(Race::Asian)));
        assert_eq!(w.len(), 4);

        let d = [true, false, true];
        let (c, _) = concordance(&d, &d, &[1.0, 2.0, 3.0], &[Race::Asian, Race::Black, Race::Asian]).unwrap();
        assert!(c.values().all(|&v| v == 1.0));
    }

    #[test]
    fn table1_rows_and_order() {
        let p = paired(
            vec![0.02, 0.02, 0.02, 0.02, 0.02],
            vec![0.01; 5],
            vec![false; 5],
            vec![1.0; 5],
            vec![Race::Black, Race::White, Race::Hispanic, Race::Asian, Race::Other],
        );
        let rep = utility_gain_paired(&p, PolicyDerivation::Indifference, &RewardSpec::new(70.0)).unwrap();
        let csv = String::from_utf8(table1_csv(&rep).unwrap()).unwrap();
        let groups: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(groups, ["group", "Asian", "White", "Hispanic", "Black", "All"]);
        assert!(csv.lines().nth(1).unwrap().starts_with("Asian,-1,-100,0,1,-1,0,1"));
    }

    #[test]
    fn derivation_serde() {
        let d: PolicyDerivation = serde_json::from_str(r#"{"kind":"capacity","q":0.5}"#).unwrap();
        assert_eq!(d, PolicyDerivation::Capacity { q: 0.5 });
    }
}
