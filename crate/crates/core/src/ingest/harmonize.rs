use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::record::{ExtendedCovariates, Gender, PatientRecord, Race};
use super::table::{RawTable, Value};
use super::IngestError;

const POUNDS_TO_KG: f64 = 0.453_592_37;

/// Which components make up the diabetes outcome. A respondent is positive
/// if any enabled component available for them is positive, negative if at
/// least one enabled component is available and none is positive, and
/// missing otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutcomeDefinition {
    /// Self-reported prior diagnosis (`DIQ010 == 1`).
    pub prior_diagnosis: bool,
    /// Glycohemoglobin cut-off in percent.
    pub hba1c_threshold: Option<f64>,
    /// Fasting plasma glucose cut-off in mg/dL.
    pub fasting_glucose_threshold: Option<f64>,
}

impl Default for OutcomeDefinition {
    fn default() -> Self {
        OutcomeDefinition {
            prior_diagnosis: true,
            hba1c_threshold: Some(6.5),
            fasting_glucose_threshold: Some(126.0),
        }
    }
}

impl OutcomeDefinition {
    pub fn validate(&self) -> Result<(), String> {
        if !self.prior_diagnosis && self.hba1c_threshold.is_none() && self.fasting_glucose_threshold.is_none() {
            return Err("outcome definition enables no component".into());
        }
        for t in [self.hba1c_threshold, self.fasting_glucose_threshold].into_iter().flatten() {
            if !(t.is_finite() && t > 0.0) {
                return Err(format!("outcome threshold {t} must be positive"));
            }
        }
        Ok(())
    }
}

/// Source variable names and code tables. Defaults follow the NHANES
/// 2011–2018 public-use files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarmonizationMap {
    pub id: String,
    pub age: String,
    pub race: String,
    pub pregnant: String,
    pub exam_weight: String,
    pub bmi: String,
    pub diagnosed: String,
    pub hba1c: String,
    pub fasting_glucose: String,
    pub gender: String,
    pub weight_kg: String,
    pub height_cm: String,
    pub waist_cm: String,
    /// Self-reported greatest weight, recorded in pounds.
    pub greatest_weight_lb: String,
    pub family_history: String,
    pub depressed: String,
    pub income: String,
    pub insured: String,
    pub food_security: String,
    /// Codes of the detailed race/ethnicity variable.
    pub race_codes: Vec<(i64, Race)>,
    pub outcome: OutcomeDefinition,
}

impl Default for HarmonizationMap {
    fn default() -> Self {
        HarmonizationMap {
            id: "SEQN".into(),
            age: "RIDAGEYR".into(),
            race: "RIDRETH3".into(),
            pregnant: "RIDEXPRG".into(),
            exam_weight: "WTMEC2YR".into(),
            bmi: "BMXBMI".into(),
            diagnosed: "DIQ010".into(),
            hba1c: "LBXGH".into(),
            fasting_glucose: "LBXGLU".into(),
            gender: "RIAGENDR".into(),
            weight_kg: "BMXWT".into(),
            height_cm: "BMXHT".into(),
            waist_cm: "BMXWAIST".into(),
            greatest_weight_lb: "WHD140".into(),
            family_history: "MCQ300C".into(),
            depressed: "DPQ020".into(),
            income: "INDFMPIR".into(),
            insured: "HIQ011".into(),
            food_security: "FSDAD".into(),
            race_codes: nhanes_race_codes(),
            outcome: OutcomeDefinition::default(),
        }
    }
}

/// RIDRETH3: 1 Mexican American, 2 Other Hispanic, 3 Non-Hispanic White,
/// 4 Non-Hispanic Black, 6 Non-Hispanic Asian, 7 Other race incl. multiracial.
pub fn nhanes_race_codes() -> Vec<(i64, Race)> {
    vec![
        (1, Race::Hispanic),
        (2, Race::Hispanic),
        (3, Race::White),
        (4, Race::Black),
        (6, Race::Asian),
        (7, Race::Other),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Harmonized {
    pub records: Vec<PatientRecord>,
    /// Sorted cycle identifiers that contributed records.
    pub cycles: Vec<String>,
    /// Respondents present in a non-demographics table but not in demographics.
    pub orphans: usize,
    pub unmapped_race: usize,
    pub warnings: Vec<String>,
}

struct Lookup<'a> {
    tables: Vec<(&'a RawTable, HashMap<u64, usize>)>,
}

impl<'a> Lookup<'a> {
    /// (table index, column index) of the first table carrying `var`.
    fn locate(&self, var: &str) -> Option<(usize, usize)> {
        self.tables
            .iter()
            .enumerate()
            .find_map(|(t, (table, _))| table.column_index(var).map(|c| (t, c)))
    }

    fn value(&self, loc: Option<(usize, usize)>, id: u64) -> Option<&'a Value> {
        let (t, c) = loc?;
        let (table, index) = &self.tables[t];
        index.get(&id).map(|&r| &table.rows[r][c])
    }
}

fn num(v: Option<&Value>) -> Option<f64> {
    v.and_then(Value::as_f64).filter(|x| x.is_finite())
}

fn code(v: Option<&Value>) -> Option<i64> {
    num(v).filter(|x| x.fract() == 0.0).map(|x| x as i64)
}

fn positive(v: Option<&Value>) -> Option<f64> {
    num(v).filter(|&x| x > 0.0)
}

fn yes_no(v: Option<&Value>) -> Option<bool> {
    match code(v) {
        Some(1) => Some(true),
        Some(2) => Some(false),
        _ => None,
    }
}

fn id_of(value: &Value, table: &str, row: usize) -> Result<u64, IngestError> {
    match value.as_f64() {
        Some(x) if x >= 0.0 && x.fract() == 0.0 => Ok(x as u64),
        _ => Err(IngestError::Harmonize(format!("row {row} of `{table}` has an invalid respondent id"))),
    }
}

fn index_table(table: &RawTable, id_col: usize) -> Result<HashMap<u64, usize>, IngestError> {
    let mut index = HashMap::with_capacity(table.rows.len());
    for (r, row) in table.rows.iter().enumerate() {
        let id = id_of(&row[id_col], &table.name, r)?;
        if index.insert(id, r).is_some() {
            return Err(IngestError::Harmonize(format!(
                "respondent {id} appears more than once in `{}`",
                table.name
            )));
        }
    }
    Ok(index)
}

/// Joins per-cycle tables on respondent id and produces one record per
/// demographics row, ordered by cycle then respondent id. Exam weights are
/// divided by the number of pooled cycles.
pub fn harmonize_cycles(tables: &[RawTable], map: &HarmonizationMap) -> Result<Harmonized, IngestError> {
    map.outcome.validate().map_err(IngestError::Harmonize)?;

    let mut by_cycle: BTreeMap<String, Vec<&RawTable>> = BTreeMap::new();
    for t in tables {
        let cycle = t.resolved_cycle().ok_or_else(|| {
            IngestError::Harmonize(format!("cannot determine the survey cycle of table `{}`", t.name))
        })?;
        by_cycle.entry(cycle).or_default().push(t);
    }
    let n_cycles = by_cycle.len() as f64;
    let race_codes: HashMap<i64, Race> = map.race_codes.iter().copied().collect();

    let mut out = Harmonized {
        records: Vec::new(),
        cycles: by_cycle.keys().cloned().collect(),
        orphans: 0,
        unmapped_race: 0,
        warnings: Vec::new(),
    };

    for (cycle, mut cycle_tables) in by_cycle {
        cycle_tables.sort_by(|a, b| a.name.cmp(&b.name));
        let demo_pos = cycle_tables
            .iter()
            .position(|t| t.has_column(&map.id) && t.has_column(&map.race))
            .ok_or_else(|| {
                IngestError::Harmonize(format!("cycle {cycle} has no demographics table (needs `{}`)", map.race))
            })?;
        let demo = cycle_tables.remove(demo_pos);
        cycle_tables.insert(0, demo);

        let mut lookup = Lookup { tables: Vec::new() };
        for t in &cycle_tables {
            let Some(id_col) = t.column_index(&map.id) else {
                out.warnings.push(format!("table `{}` has no `{}` column; ignored", t.name, map.id));
                continue;
            };
            lookup.tables.push((t, index_table(t, id_col)?));
        }

        let demo_index = &lookup.tables[0].1;
        for (t, index) in &lookup.tables[1..] {
            let orphans: BTreeSet<u64> = index.keys().filter(|id| !demo_index.contains_key(id)).copied().collect();
            if !orphans.is_empty() {
                let msg = format!(
                    "{} respondent(s) in `{}` ({cycle}) have no demographics row; dropped",
                    orphans.len(),
                    t.name
                );
                log::warn!("{msg}");
                out.warnings.push(msg);
                out.orphans += orphans.len();
            }
        }

        let loc = |var: &str| lookup.locate(var);
        let (l_age, l_race, l_preg, l_wt, l_bmi) =
            (loc(&map.age), loc(&map.race), loc(&map.pregnant), loc(&map.exam_weight), loc(&map.bmi));
        let (l_diag, l_a1c, l_fpg) = (loc(&map.diagnosed), loc(&map.hba1c), loc(&map.fasting_glucose));
        let l_ext = [
            loc(&map.gender),
            loc(&map.weight_kg),
            loc(&map.height_cm),
            loc(&map.waist_cm),
            loc(&map.greatest_weight_lb),
            loc(&map.family_history),
            loc(&map.depressed),
            loc(&map.income),
            loc(&map.insured),
            loc(&map.food_security),
        ];
        for (var, l) in [(&map.bmi, l_bmi), (&map.exam_weight, l_wt)] {
            if l.is_none() {
                out.warnings.push(format!("cycle {cycle}: variable `{var}` not found in any table"));
            }
        }

        let mut ids: Vec<u64> = demo_index.keys().copied().collect();
        ids.sort_unstable();
        for id in ids {
            let get = |l| lookup.value(l, id);

            let race = match code(get(l_race)) {
                Some(c) => Some(match race_codes.get(&c) {
                    Some(&r) => r,
                    None => {
                        out.unmapped_race += 1;
                        Race::Other
                    }
                }),
                None => None,
            };

            let diabetes = {
                let mut components = Vec::new();
                if map.outcome.prior_diagnosis {
                    components.push(match code(get(l_diag)) {
                        Some(1) => Some(true),
                        Some(2) | Some(3) => Some(false),
                        _ => None,
                    });
                }
                if let Some(t) = map.outcome.hba1c_threshold {
                    components.push(positive(get(l_a1c)).map(|v| v >= t));
                }
                if let Some(t) = map.outcome.fasting_glucose_threshold {
                    components.push(positive(get(l_fpg)).map(|v| v >= t));
                }
                if components.contains(&Some(true)) {
                    Some(true)
                } else if components.iter().any(Option::is_some) {
                    Some(false)
                } else {
                    None
                }
            };

            let extended = ExtendedCovariates {
                gender: match code(get(l_ext[0])) {
                    Some(1) => Some(Gender::Male),
                    Some(2) => Some(Gender::Female),
                    _ => None,
                },
                weight_kg: positive(get(l_ext[1])),
                height_cm: positive(get(l_ext[2])),
                waist_cm: positive(get(l_ext[3])),
                // 7777 refused, 9999 don't know
                greatest_weight_kg: positive(get(l_ext[4]))
                    .filter(|&lb| lb < 7777.0)
                    .map(|lb| lb * POUNDS_TO_KG),
                family_history: yes_no(get(l_ext[5])),
                depressed: match code(get(l_ext[6])) {
                    Some(0) => Some(false),
                    Some(1..=3) => Some(true),
                    _ => None,
                },
                income: num(get(l_ext[7])).filter(|&x| x >= 0.0),
                insured: yes_no(get(l_ext[8])),
                food_secure: match code(get(l_ext[9])) {
                    Some(1 | 2) => Some(true),
                    Some(3 | 4) => Some(false),
                    _ => None,
                },
            };

            out.records.push(PatientRecord {
                id,
                cycle: cycle.clone(),
                age: num(get(l_age)).filter(|&a| a >= 0.0).map(|a| a.floor() as u32),
                bmi: positive(get(l_bmi)),
                race,
                pregnant: code(get(l_preg)) == Some(1),
                diabetes,
                weight_survey: num(get(l_wt)).filter(|&w| w >= 0.0).unwrap_or(0.0) / n_cycles,
                extended,
            });
        }
    }
    if out.unmapped_race > 0 {
        let msg = format!("{} respondent(s) had an unmapped race code; coded as Other", out.unmapped_race);
        log::warn!("{msg}");
        out.warnings.push(msg);
    }
    Ok(out)
}
