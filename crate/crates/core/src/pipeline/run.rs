use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SourceKind};
use super::manifest::{build_manifest, sha256_hex, Manifest, MANIFEST_FILE};
use super::PipelineError;
use crate::calibrate::{curve_for, curves_to_csv, CurveMethod, Group};
use crate::ingest::{
    build_cohort, harmonize_cycles, load_csv, parse_xport, read_cohort_csv, write_cohort_csv, Cohort,
    CohortProvenance, Column, CsvSchema, HarmonizationMap, Race, RawTable,
};
use crate::model::{build_design, fit_logistic, RiskModel};
use crate::utility::{
    histogram_to_csv, paired_scores, risk_distribution, sensitivity_sweep, subgroup_csv, subgroup_summary,
    sweep_to_csv, table1_csv, utility_curve, utility_curves_to_csv, utility_gain_paired, PolicyDerivation,
    UtilityReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Fit,
    Report,
    Sweep,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Fit => "fit",
            Stage::Report => "report",
            Stage::Sweep => "sweep",
            Stage::All => "all",
        }
    }
}

/// One output file, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(path: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Artifact { path: path.into(), bytes: bytes.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    /// Files written by this run, in write order.
    pub written: Vec<String>,
    pub manifest: Manifest,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub provenance: CohortProvenance,
    pub harmonized_records: usize,
    pub orphans: usize,
    pub unmapped_race: usize,
    pub weighted_population: f64,
    pub warnings: Vec<String>,
}

/// Everything the report stage emits besides CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub weighted: bool,
    pub indifference: UtilityReport,
    pub capacity: Option<UtilityReport>,
    pub warnings: Vec<String>,
}

fn stage_err(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Stage { stage: stage.name(), message }
}

fn json(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

fn csv_header(path: &Path) -> Result<Vec<String>, PipelineError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| stage_err(Stage::Ingest)(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| stage_err(Stage::Ingest)(format!("{}: {e}", path.display())))?;
    Ok(headers.iter().map(|h| h.trim().to_string()).collect())
}

pub fn load_tables(config: &RunConfig) -> Result<Vec<RawTable>, PipelineError> {
    let err = stage_err(Stage::Ingest);
    let mut tables = Vec::new();
    for source in &config.data_sources {
        let shown = source.path.display();
        let mut loaded = match source.kind {
            SourceKind::Xport => {
                let bytes = fs::read(&source.path).map_err(|e| err(format!("{shown}: {e}")))?;
                parse_xport(&bytes).map_err(|e| err(format!("{shown}: {e}")))?
            }
            SourceKind::Csv => {
                let stem = source.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let table = source.table.clone().unwrap_or(stem);
                let columns = match &source.columns {
                    Some(c) => c.clone(),
                    None => {
                        let cols: Vec<Column> = csv_header(&source.path)?.into_iter().map(Column::numeric).collect();
                        CsvSchema::identity(table.clone(), &cols).columns
                    }
                };
                let schema = CsvSchema { table, cycle: None, columns };
                load_csv(&source.path, &schema).map_err(|e| err(format!("{shown}: {e}")))?
            }
        };
        if let Some(cycle) = &source.cycle {
            loaded = loaded.into_iter().map(|t| t.with_cycle(cycle.clone())).collect();
        }
        tables.extend(loaded);
    }
    Ok(tables)
}

pub fn ingest(config: &RunConfig) -> Result<(Cohort, CohortSummary), PipelineError> {
    let err = stage_err(Stage::Ingest);
    let tables = load_tables(config)?;
    let map = HarmonizationMap { outcome: config.outcome_definition.clone(), ..HarmonizationMap::default() };
    let h = harmonize_cycles(&tables, &map).map_err(|e| err(e.to_string()))?;
    let harmonized_records = h.records.len();
    let cohort = build_cohort(h.records, &config.cohort).map_err(|e| err(e.to_string()))?;
    let summary = CohortSummary {
        provenance: CohortProvenance::of(&cohort),
        harmonized_records,
        orphans: h.orphans,
        unmapped_race: h.unmapped_race,
        weighted_population: cohort.total_weight(),
        warnings: h.warnings,
    };
    Ok((cohort, summary))
}

fn analysis_cohort(config: &RunConfig, cohort: &Cohort) -> Cohort {
    if config.weighted {
        cohort.clone()
    } else {
        cohort.with_unit_weights()
    }
}

pub fn fit_models(config: &RunConfig, cohort: &Cohort) -> Result<Vec<RiskModel>, PipelineError> {
    let err = stage_err(Stage::Fit);
    let cohort = analysis_cohort(config, cohort);
    config
        .feature_specs()
        .iter()
        .map(|spec| {
            let design = build_design(&cohort, spec).map_err(|e| err(format!("model `{}`: {e}", spec.name)))?;
            let model = fit_logistic(&design, &config.fit).map_err(|e| err(format!("model `{}`: {e}", spec.name)))?;
            if !model.converged {
                log::warn!("model `{}` did not converge in {} iterations", spec.name, model.iterations);
            }
            Ok(model)
        })
        .collect()
}

fn model_path(name: &str) -> String {
    format!("models/{name}.json")
}

fn find<'a>(models: &'a [RiskModel], name: &str) -> &'a RiskModel {
    models.iter().find(|m| m.spec.name == name).expect("validated model name")
}

struct Scored {
    scores: Vec<f64>,
    outcomes: Vec<bool>,
    weights: Vec<f64>,
    races: Vec<Race>,
}

impl Scored {
    fn of(model: &RiskModel, cohort: &Cohort) -> Result<Self, PipelineError> {
        let (design, scores) = model.predict_cohort(cohort).map_err(|e| stage_err(Stage::Report)(e.to_string()))?;
        Ok(Scored {
            races: design.row_index.iter().map(|&i| cohort.records[i].group()).collect(),
            outcomes: design.outcome,
            weights: design.weights,
            scores,
        })
    }

    fn subset(&self, group: Group) -> (Vec<f64>, Vec<bool>, Vec<f64>) {
        let idx: Vec<usize> = (0..self.scores.len()).filter(|&i| group.contains(self.races[i])).collect();
        (
            idx.iter().map(|&i| self.scores[i]).collect(),
            idx.iter().map(|&i| self.outcomes[i]).collect(),
            idx.iter().map(|&i| self.weights[i]).collect(),
        )
    }
}

fn report_artifacts(config: &RunConfig, cohort: &Cohort, models: &[RiskModel]) -> Result<Vec<Artifact>, PipelineError> {
    let err = stage_err(Stage::Report);
    let cohort = analysis_cohort(config, cohort);
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    let mut hists = Vec::new();
    let mut ucurves = Vec::new();

    for model in models {
        let name = &model.spec.name;
        let scored = Scored::of(model, &cohort)?;
        for method in [CurveMethod::Binned, CurveMethod::Smoothed] {
            let mut curves = Vec::new();
            for group in Group::reported() {
                let (s, y, w) = scored.subset(group);
                match curve_for(group, &s, &y, &w, method, &config.calibration) {
                    Ok(c) => curves.push(c),
                    Err(e) => warnings.push(format!("calibration ({name}, {method}, {group}): {e}; skipped")),
                }
            }
            let bytes = curves_to_csv(&curves).map_err(|e| err(e.to_string()))?;
            out.push(Artifact::new(format!("calibration/{name}_{method}.csv"), bytes));
        }
        for group in Group::reported() {
            let (s, y, w) = scored.subset(group);
            let d = &config.distribution;
            hists.push((name.clone(), risk_distribution(&s, &w, group, d.range, d.bins).map_err(|e| err(e.to_string()))?));
            let c = &config.calibration;
            match utility_curve(&s, &y, &w, &config.reward, c.range, c.bandwidth) {
                Ok(mut u) => {
                    u.group = group;
                    ucurves.push((name.clone(), u));
                }
                Err(e) => warnings.push(format!("utility curve ({name}, {group}): {e}; skipped")),
            }
        }
    }
    out.push(Artifact::new("risk_distribution.csv", histogram_to_csv(&hists).map_err(|e| err(e.to_string()))?));
    out.push(Artifact::new("utility_curve.csv", utility_curves_to_csv(&ucurves).map_err(|e| err(e.to_string()))?));

    let (a, b) = (find(models, &config.model_a), find(models, &config.model_b));
    let paired = paired_scores(a, b, &cohort).map_err(|e| err(e.to_string()))?;
    let indifference =
        utility_gain_paired(&paired, PolicyDerivation::Indifference, &config.reward).map_err(|e| err(e.to_string()))?;
    out.push(Artifact::new("table1.csv", table1_csv(&indifference).map_err(|e| err(e.to_string()))?));
    let capacity = match config.capacity_q {
        Some(q) => {
            let rep = utility_gain_paired(&paired, PolicyDerivation::Capacity { q }, &config.reward)
                .map_err(|e| err(e.to_string()))?;
            out.push(Artifact::new("capacity_table1.csv", table1_csv(&rep).map_err(|e| err(e.to_string()))?));
            Some(rep)
        }
        None => None,
    };

    let cells = subgroup_summary(&cohort, a, b, &config.reward, &config.subgroups).map_err(|e| err(e.to_string()))?;
    out.push(Artifact::new("subgroups.csv", subgroup_csv(&cells).map_err(|e| err(e.to_string()))?));

    for w in &warnings {
        log::warn!("{w}");
    }
    let bundle = ReportBundle { weighted: config.weighted, indifference, capacity, warnings };
    out.push(Artifact::new("utility_report.json", json(&bundle)));
    Ok(out)
}

fn sweep_artifacts(config: &RunConfig, cohort: &Cohort, models: &[RiskModel]) -> Result<Vec<Artifact>, PipelineError> {
    let err = stage_err(Stage::Sweep);
    let cohort = analysis_cohort(config, cohort);
    let (a, b) = (find(models, &config.model_a), find(models, &config.model_b));
    let sweep = sensitivity_sweep(a, b, &cohort, &config.reward, &config.sweep_grid).map_err(|e| err(e.to_string()))?;
    Ok(vec![Artifact::new("sweep.csv", sweep_to_csv(&sweep).map_err(|e| err(e.to_string()))?)])
}

fn load_cohort(dir: &Path, stage: Stage) -> Result<Cohort, PipelineError> {
    let err = stage_err(stage);
    let missing = |f: &str, e: std::io::Error| err(format!("cannot read {f} from {} ({e}); run `ingest` first", dir.display()));
    let summary = fs::read(dir.join("cohort.json")).map_err(|e| missing("cohort.json", e))?;
    let summary: CohortSummary = serde_json::from_slice(&summary).map_err(|e| err(format!("cohort.json: {e}")))?;
    let csv = fs::read(dir.join("cohort.csv")).map_err(|e| missing("cohort.csv", e))?;
    read_cohort_csv(&csv, &summary.provenance).map_err(|e| err(e.to_string()))
}

fn load_models(config: &RunConfig, stage: Stage) -> Result<Vec<RiskModel>, PipelineError> {
    let err = stage_err(stage);
    config
        .feature_specs()
        .iter()
        .map(|spec| {
            let path = config.output_dir.join(model_path(&spec.name));
            let text = fs::read_to_string(&path)
                .map_err(|e| err(format!("cannot read {} ({e}); run `fit` first", path.display())))?;
            let model = RiskModel::from_json(&text).map_err(|e| err(format!("{}: {e}", path.display())))?;
            if model.spec.name != spec.name || model.spec.terms != spec.terms {
                return Err(err(format!("{} does not match the configured model; rerun `fit`", path.display())));
            }
            Ok(model)
        })
        .collect()
}

fn config_digest(config: &RunConfig) -> String {
    let mut c = config.clone();
    for s in &mut c.data_sources {
        s.path = s.path.file_name().map(PathBuf::from).unwrap_or_default();
    }
    c.output_dir = PathBuf::new();
    sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
}

/// Writes every artifact to a temporary name first, then renames them into
/// place, so a failed run leaves no partial files behind.
fn commit(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<String>, PipelineError> {
    let io = |what: &str, p: &Path, e: std::io::Error| PipelineError::Io(format!("{what} {}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io("cannot create", dir, e))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for a in artifacts {
        let target = dir.join(&a.path);
        let tmp = target.with_file_name(format!(
            ".{}.partial",
            target.file_name().expect("artifact has a file name").to_string_lossy()
        ));
        let result = target
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|_| fs::write(&tmp, &a.bytes));
        if let Err(e) = result {
            cleanup(&staged);
            let _ = fs::remove_file(&tmp);
            return Err(io("cannot write", &tmp, e));
        }
        staged.push((tmp, target));
    }
    let mut written = Vec::new();
    for (i, (tmp, target)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, target) {
            cleanup(&staged[i..]);
            for done in &written {
                let _ = fs::remove_file(dir.join(done as &String));
            }
            return Err(io("cannot move into place", target, e));
        }
        written.push(artifacts[i].path.clone());
    }
    Ok(written)
}

/// Removes the files listed in an existing manifest, so a full run does not
/// leave stale artifacts from an earlier configuration behind.
fn clear_previous(dir: &Path) {
    let Ok(text) = fs::read_to_string(dir.join(MANIFEST_FILE)) else { return };
    let Ok(old) = serde_json::from_str::<Manifest>(&text) else { return };
    for f in old.files {
        let _ = fs::remove_file(dir.join(&f.file));
    }
}

/// Runs one stage (or all of them). Earlier stages' outputs are read back
/// from the output directory when a single later stage is requested.
pub fn run_stage(config: &RunConfig, stage: Stage) -> Result<RunArtifacts, PipelineError> {
    let dir = &config.output_dir;
    let mut artifacts = Vec::new();
    let mut warnings = Vec::new();

    let cohort = if matches!(stage, Stage::Ingest | Stage::All) {
        let (cohort, summary) = ingest(config)?;
        let csv = write_cohort_csv(&cohort).map_err(|e| stage_err(Stage::Ingest)(e.to_string()))?;
        warnings.extend(summary.warnings.iter().cloned());
        artifacts.push(Artifact::new("cohort.csv", csv));
        artifacts.push(Artifact::new("cohort.json", json(&summary)));
        cohort
    } else {
        load_cohort(dir, stage)?
    };

    if stage != Stage::Ingest {
        let models = if matches!(stage, Stage::Fit | Stage::All) {
            let models = fit_models(config, &cohort)?;
            for m in &models {
                let mut text = m.to_json();
                text.push('\n');
                artifacts.push(Artifact::new(model_path(&m.spec.name), text));
            }
            models
        } else {
            load_models(config, stage)?
        };
        if matches!(stage, Stage::Report | Stage::All) {
            let report = report_artifacts(config, &cohort, &models)?;
            if let Some(bundle) = report.iter().find(|a| a.path == "utility_report.json") {
                let b: ReportBundle = serde_json::from_slice(&bundle.bytes).expect("bundle round-trips");
                warnings.extend(b.warnings);
            }
            artifacts.extend(report);
        }
        if matches!(stage, Stage::Sweep | Stage::All) {
            artifacts.extend(sweep_artifacts(config, &cohort, &models)?);
        }
    }

    if stage == Stage::All {
        clear_previous(dir);
    }
    let written = commit(dir, &artifacts)?;
    let manifest = build_manifest(dir, config_digest(config))
        .map_err(|e| PipelineError::Io(format!("cannot build manifest: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), manifest.to_json())
        .map_err(|e| PipelineError::Io(format!("cannot write manifest: {e}")))?;
    Ok(RunArtifacts { output_dir: dir.clone(), written, manifest, warnings })
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunArtifacts, PipelineError> {
    run_stage(config, Stage::All)
}
