use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::calibrate::CalibrationParams;
use crate::ingest::{CohortCriteria, CsvColumn, OutcomeDefinition};
use crate::model::{FeatureSpec, FitOptions, Term};
use crate::utility::{RewardSpec, SubgroupParams, DEFAULT_SWEEP_GRID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Xport,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub path: PathBuf,
    pub kind: SourceKind,
    /// Dataset name for CSV sources; defaults to the file stem.
    #[serde(default)]
    pub table: Option<String>,
    /// Survey cycle; inferred from the dataset name suffix when absent.
    #[serde(default)]
    pub cycle: Option<String>,
    /// CSV column mapping. When absent every header is read as a numeric variable.
    #[serde(default)]
    pub columns: Option<Vec<CsvColumn>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub terms: Vec<Term>,
}

impl From<&FeatureSpec> for ModelConfig {
    fn from(spec: &FeatureSpec) -> Self {
        ModelConfig { name: spec.name.clone(), terms: spec.terms.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistributionParams {
    pub range: (f64, f64),
    pub bins: usize,
}

impl Default for DistributionParams {
    fn default() -> Self {
        DistributionParams { range: (0.0, 0.2), bins: 40 }
    }
}

fn default_models() -> Vec<ModelConfig> {
    vec![(&FeatureSpec::race_unaware()).into(), (&FeatureSpec::race_aware()).into()]
}

fn default_reward() -> RewardSpec {
    RewardSpec::new(70.0)
}

fn default_sweep() -> Vec<f64> {
    DEFAULT_SWEEP_GRID.to_vec()
}

fn default_model_a() -> String {
    FeatureSpec::race_aware().name
}

fn default_model_b() -> String {
    FeatureSpec::race_unaware().name
}

fn default_output() -> PathBuf {
    PathBuf::from("riskscreen-out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data_sources: Vec<DataSource>,
    #[serde(default)]
    pub cohort: CohortCriteria,
    #[serde(default)]
    pub outcome_definition: OutcomeDefinition,
    #[serde(default = "default_models")]
    pub models: Vec<ModelConfig>,
    /// Name of the model whose gain is reported.
    #[serde(default = "default_model_a")]
    pub model_a: String,
    /// Name of the baseline model.
    #[serde(default = "default_model_b")]
    pub model_b: String,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default = "default_reward")]
    pub reward: RewardSpec,
    #[serde(default = "default_sweep")]
    pub sweep_grid: Vec<f64>,
    #[serde(default)]
    pub capacity_q: Option<f64>,
    #[serde(default)]
    pub calibration: CalibrationParams,
    #[serde(default)]
    pub distribution: DistributionParams,
    #[serde(default)]
    pub subgroups: SubgroupParams,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub weighted: bool,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn feature_specs(&self) -> Vec<FeatureSpec> {
        self.models.iter().map(|m| FeatureSpec::new(m.name.clone(), m.terms.clone())).collect()
    }

    /// Makes relative paths relative to `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        for s in &mut self.data_sources {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    /// Every constraint violation, in a stable order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.data_sources.is_empty() {
            out.push("data_sources: at least one source is required".to_string());
        }
        for (i, s) in self.data_sources.iter().enumerate() {
            if !s.path.is_file() {
                out.push(format!("data_sources[{i}]: file `{}` does not exist", s.path.display()));
            }
            if s.kind == SourceKind::Xport && (s.columns.is_some() || s.table.is_some()) {
                out.push(format!("data_sources[{i}]: `table` and `columns` apply to csv sources only"));
            }
        }
        if let Err(e) = self.cohort.validate() {
            out.push(format!("cohort: {e}"));
        }
        if let Err(e) = self.outcome_definition.validate() {
            out.push(format!("outcome_definition: {e}"));
        }
        if self.models.len() < 2 {
            out.push("models: at least two models are required".to_string());
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            out.push("models: model names must be unique".to_string());
        }
        for spec in self.feature_specs() {
            if spec.name.is_empty() || !spec.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                out.push(format!("models: name `{}` must be non-empty ASCII letters, digits, `_` or `-`", spec.name));
            }
            if let Err(e) = spec.validate() {
                out.push(format!("models.{}: {e}", spec.name));
            }
        }
        for (key, name) in [("model_a", &self.model_a), ("model_b", &self.model_b)] {
            if !self.models.iter().any(|m| &m.name == name) {
                out.push(format!("{key}: no model named `{name}`"));
            }
        }
        if self.model_a == self.model_b {
            out.push("model_a and model_b must differ".to_string());
        }
        if !(self.fit.tolerance > 0.0) || self.fit.max_iter == 0 || !(self.fit.coefficient_cap > 0.0) {
            out.push("fit: tolerance, max_iter and coefficient_cap must be positive".to_string());
        }
        if let Some(l) = self.fit.ridge_fallback {
            if !(l > 0.0 && l.is_finite()) {
                out.push(format!("fit.ridge_fallback: must be positive, got {l}"));
            }
        }
        if let Err(e) = self.reward.validate() {
            out.push(format!("reward: {e}"));
        }
        if self.sweep_grid.is_empty() {
            out.push("sweep_grid: must not be empty".to_string());
        }
        for r in &self.sweep_grid {
            if !(r.is_finite() && *r > 1.0) {
                out.push(format!("sweep_grid: every reward must exceed 1, got {r}"));
            }
        }
        if let Some(q) = self.capacity_q {
            if !(q > 0.0 && q <= 1.0) {
                out.push(format!("capacity_q: must lie in (0, 1], got {q}"));
            }
        }
        let c = &self.calibration;
        if !(c.range.0 < c.range.1) || c.bins == 0 || !(c.bandwidth > 0.0) || c.grid_points == 0 {
            out.push("calibration: need range lo < hi, bins ≥ 1, bandwidth > 0, grid_points ≥ 1".to_string());
        }
        let d = &self.distribution;
        if !(d.range.0 < d.range.1) || d.bins == 0 {
            out.push("distribution: need range lo < hi and bins ≥ 1".to_string());
        }
        for (key, edges) in [("age_edges", &self.subgroups.age_edges), ("bmi_edges", &self.subgroups.bmi_edges)] {
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                out.push(format!("subgroups.{key}: need at least two strictly increasing edges"));
            }
        }
        if !(self.subgroups.min_cell_weight >= 0.0) {
            out.push("subgroups.min_cell_weight: must be nonnegative".to_string());
        }
        out
    }
}

/// Parses and checks a TOML run configuration. Relative paths are resolved
/// against `base` when given.
pub fn validate_config(text: &str, base: Option<&Path>) -> Result<RunConfig, PipelineError> {
    let mut config: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(vec![e.message().to_string()]))?;
    if let Some(base) = base {
        config.resolve_paths(base);
    }
    let problems = config.problems();
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(PipelineError::Config(problems))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    validate_config(&text, Some(path.parent().unwrap_or(Path::new("."))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::threshold_from_reward;

    fn with_file() -> (tempfile::TempDir, String) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("DEMO_G.xpt"), b"").unwrap();
        (dir, "[[data_sources]]\npath = \"DEMO_G.xpt\"\nkind = \"xport\"\n".to_string())
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let (dir, text) = with_file();
        let c = validate_config(&text, Some(dir.path())).unwrap();
        assert_eq!(c.reward.r, 70.0);
        assert_eq!(threshold_from_reward(&c.reward).unwrap().threshold, 1.0 / 70.0);
        assert_eq!(c.models.len(), 2);
        assert_eq!((c.model_a.as_str(), c.model_b.as_str()), ("race_aware", "race_unaware"));
        assert!(c.weighted);
        assert_eq!(c.sweep_grid.len(), 20);
    }

    #[test]
    fn low_reward_is_rejected() {
        let (dir, text) = with_file();
        let err = validate_config(&format!("{text}[reward]\nr = 0.5\n"), Some(dir.path())).unwrap_err();
        assert!(err.to_string().contains("reward"), "{err}");
    }

    #[test]
    fn missing_sources_are_named() {
        let err = validate_config("weighted = true\n", None).unwrap_err();
        assert!(err.to_string().contains("data_sources"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let (dir, text) = with_file();
        let err = validate_config(&format!("colour = 1\n{text}"), Some(dir.path())).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = validate_config(&format!("{text}[cohort]\nage_minimum = 3\n"), Some(dir.path())).unwrap_err();
        assert!(err.to_string().contains("age_minimum"), "{err}");
    }

    #[test]
    fn constraint_errors_are_aggregated() {
        let text = "data_sources = [{ path = \"nope.xpt\", kind = \"xport\" }]\ncapacity_q = 2.0\nsweep_grid = [0.5]\n";
        let PipelineError::Config(list) = validate_config(text, None).unwrap_err() else { panic!() };
        assert_eq!(list.len(), 3, "{list:?}");
    }

    #[test]
    fn models_parse_from_term_strings() {
        let (dir, text) = with_file();
        let extra = "model_a = \"b\"\nmodel_b = \"a\"\n[[models]]\nname = \"a\"\nterms = [\"intercept\", \"poly(age, 2)\"]\n[[models]]\nname = \"b\"\nterms = [\"intercept\", \"age\", \"C(race, ref=White)\"]\n";
        let c = validate_config(&format!("{extra}{text}"), Some(dir.path())).unwrap();
        assert_eq!(c.feature_specs()[1].column_labels().len(), 6);
    }
}
