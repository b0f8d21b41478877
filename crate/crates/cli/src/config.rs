use std::path::{Path, PathBuf};

use mtsysid::{InputSignal, RegularizerSpec, SimilarFamilySpec, SolverConfig, StepRule};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Generate,
    Ingest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ls,
    MtGroup,
    MtDeviation,
    MtNuclear,
    MtComposite,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ls => "ls",
            Self::MtGroup => "mt-group",
            Self::MtDeviation => "mt-deviation",
            Self::MtNuclear => "mt-nuclear",
            Self::MtComposite => "mt-composite",
        }
    }
}

/// Solver knobs exposed to configuration; the regularizer comes from the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub max_backtracks_per_iter: usize,
    pub step_rule: StepRule,
    pub accelerated: bool,
    /// Primary weight (group weight for the composite prior). Required unless
    /// cross-validation picks it.
    pub lambda: Option<f64>,
    /// Heterogeneity weight of the composite prior.
    pub lambda1: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let base = SolverConfig::default();
        Self {
            initial_step: base.initial_step,
            backtrack_factor: base.backtrack_factor,
            max_iterations: base.max_iterations,
            rel_tolerance: base.rel_tolerance,
            max_backtracks_per_iter: base.max_backtracks_per_iter,
            step_rule: base.step_rule,
            accelerated: base.accelerated,
            lambda: None,
            lambda1: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
    /// Explicit grid. When absent, `points` log-spaced values run from
    /// `low_fraction` times the data-driven upper end up to that end.
    pub grid: Option<Vec<f64>>,
    pub low_fraction: f64,
    pub points: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            grid: None,
            low_fraction: 1e-4,
            points: mtsysid::analysis::DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<SimilarFamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_paths: Option<Vec<PathBuf>>,
    /// Input matrices per system (ingest mode; needed when inputs are present).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_paths: Option<Vec<PathBuf>>,
    /// Known state matrices per system, enabling Frobenius errors (ingest mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_paths: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub input_signal: InputSignal,
    pub method: Method,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvSettings>,
    pub train_lengths: Vec<usize>,
    pub test_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| toml_error(text, origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn systems(&self) -> usize {
        match self.mode {
            Mode::Generate => self.family.as_ref().map_or(0, |f| f.systems),
            Mode::Ingest => self.data_paths.as_ref().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        match self.mode {
            Mode::Generate => {
                let Some(family) = &self.family else {
                    return bad("generate mode needs a [family] table".into());
                };
                if self.data_paths.is_some() || self.b_paths.is_some() || self.truth_paths.is_some() {
                    return bad("generate mode takes no data, B or truth paths".into());
                }
                family.validate()?;
            }
            Mode::Ingest => {
                let Some(paths) = &self.data_paths else {
                    return bad("ingest mode needs data_paths".into());
                };
                if self.family.is_some() {
                    return bad("ingest mode takes no [family] table".into());
                }
                if paths.is_empty() {
                    return bad("data_paths is empty".into());
                }
                for (name, extra) in [("b_paths", &self.b_paths), ("truth_paths", &self.truth_paths)] {
                    if let Some(extra) = extra {
                        if extra.len() != paths.len() {
                            return bad(format!("{name} has {} entries for {} systems", extra.len(), paths.len()));
                        }
                    }
                }
            }
        }
        let count = self.systems();
        if self.train_lengths.len() != count {
            return bad(format!("train_lengths has {} entries for {count} systems", self.train_lengths.len()));
        }
        if self.test_length < 2 {
            return bad(format!("test_length must be at least 2, got {}", self.test_length));
        }
        if self.train_lengths.contains(&0) {
            return bad("every system needs at least one training pair".into());
        }
        if self.method != Method::Ls && self.solver.lambda.is_none() && self.cv.is_none() {
            return bad(format!("method {} needs solver.lambda or a [cv] table", self.method.as_str()));
        }
        if let Some(cv) = &self.cv {
            if cv.folds < 2 {
                return bad(format!("cv.folds must be at least 2, got {}", cv.folds));
            }
            if cv.grid.is_none() && (cv.points == 0 || !(cv.low_fraction > 0.0 && cv.low_fraction <= 1.0)) {
                return bad("cv needs points >= 1 and low_fraction in (0, 1]".into());
            }
        }
        self.solver_config(self.solver.lambda.unwrap_or(0.0)).validate()?;
        Ok(())
    }

    /// Regularizer implied by the method at primary weight `lambda`.
    pub fn regularizer(&self, lambda: f64) -> RegularizerSpec {
        match self.method {
            Method::Ls | Method::MtGroup => RegularizerSpec::group_sparsity(lambda),
            Method::MtDeviation => RegularizerSpec::small_heterogeneity(lambda),
            Method::MtNuclear => RegularizerSpec::nuclear_norm(lambda),
            Method::MtComposite => RegularizerSpec::composite(self.solver.lambda1, lambda),
        }
    }

    pub fn solver_config(&self, lambda: f64) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            initial_step: s.initial_step,
            backtrack_factor: s.backtrack_factor,
            regularizer: self.regularizer(lambda),
            max_iterations: s.max_iterations,
            rel_tolerance: s.rel_tolerance,
            max_backtracks_per_iter: s.max_backtracks_per_iter,
            step_rule: s.step_rule,
            accelerated: s.accelerated,
        }
    }
}

fn toml_error(text: &str, origin: &Path, e: toml::de::Error) -> CliError {
    let line = e.span().map(|s| text[..s.start].matches('\n').count() as u64 + 1).unwrap_or(0);
    CliError::parse(origin, line, e.message().to_string())
}

/// Parses a TOML document into a table, reporting the failing line.
pub fn parse_table(text: &str, origin: &Path) -> CliResult<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| toml_error(text, origin, e))
}

pub fn load_table(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_table(&text, path)
}

/// Overlays `top` onto `base`, recursing into nested tables.
pub fn merge_tables(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge_tables(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
