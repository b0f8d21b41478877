//! The synthetic "case k" grid: system `N` gets `10k + 10` training pairs,
//! the others `40k + 40` (case 5: 75 and 300), all scaled by a size factor.

use std::path::{Path, PathBuf};

use mtsysid::model::derive_seed;
use mtsysid::{FamilyKind, InputSignal, SimilarFamilySpec};
use serde::{Deserialize, Serialize};

use crate::config::{CvSettings, ExperimentConfig, Method, Mode, SolverSettings};
use crate::error::{CliError, CliResult};
use crate::experiment::run_experiment;
use crate::io::export_results;
use crate::record::{ResultsRecord, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    CommonSparsity,
    LinearCombination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateConfig {
    pub structure: Structure,
    pub state_dim: usize,
    pub input_dim: usize,
    pub systems: usize,
    pub noise_std: f64,
    pub spectral_radius_cap: f64,
    pub density: f64,
    pub basis_rank: usize,
    pub input_signal: InputSignal,
    pub cases: Vec<usize>,
    pub size_factor: f64,
    pub test_length: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub solver: SolverSettings,
    pub cv: CvSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            structure: Structure::CommonSparsity,
            state_dim: 20,
            input_dim: 4,
            systems: 10,
            noise_std: 0.1,
            spectral_radius_cap: 0.95,
            density: 0.2,
            basis_rank: 3,
            input_signal: InputSignal::Ones,
            cases: vec![1, 2, 3, 4, 5],
            size_factor: 1.0,
            test_length: 60,
            seeds: 20,
            base_seed: 0,
            solver: SolverSettings {
                accelerated: true,
                max_iterations: 100_000,
                rel_tolerance: 1e-7,
                ..SolverSettings::default()
            },
            cv: CvSettings {
                folds: 3,
                low_fraction: 1e-7,
                points: 15,
                ..CvSettings::default()
            },
            output_dir: None,
        }
    }
}

/// Unscaled `(scarce, others)` training pair counts for `case`.
pub fn case_sizes(case: usize) -> CliResult<(usize, usize)> {
    match case {
        1..=4 => Ok((10 * case + 10, 40 * case + 40)),
        5 => Ok((75, 300)),
        _ => Err(CliError::Config(format!("case must lie in 1..=5, got {case}"))),
    }
}

fn scaled(count: usize, factor: f64) -> usize {
    ((count as f64 * factor).round() as usize).max(1)
}

/// One row of the error-versus-case table, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub case: usize,
    pub method: String,
    pub scarce_pairs: usize,
    pub other_pairs: usize,
    pub mean_error: f64,
    /// Mean E(A) of the data-poor system.
    pub scarce_error: f64,
    /// Seeds where this method beat least squares on the data-poor system.
    pub scarce_wins: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub schema_version: u32,
    pub config: ReplicateConfig,
    pub curve: Vec<CurvePoint>,
    pub records: Vec<ResultsRecord>,
}

impl ReplicateConfig {
    pub fn mt_method(&self) -> Method {
        match self.structure {
            Structure::CommonSparsity => Method::MtGroup,
            Structure::LinearCombination => Method::MtNuclear,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.cases.is_empty() || self.seeds == 0 {
            return Err(CliError::Config("need at least one case and one seed".into()));
        }
        if !(self.size_factor > 0.0 && self.size_factor.is_finite()) {
            return Err(CliError::Config(format!("size_factor must be positive, got {}", self.size_factor)));
        }
        if self.systems < 2 {
            return Err(CliError::Config("the grid needs at least two systems".into()));
        }
        for &case in &self.cases {
            case_sizes(case)?;
        }
        Ok(())
    }

    /// Experiment for one case, seed and method; the two methods of a case
    /// and seed see the same data.
    pub fn experiment(&self, case: usize, seed_index: usize, method: Method) -> CliResult<ExperimentConfig> {
        let (scarce, others) = case_sizes(case)?;
        let mut train_lengths = vec![scaled(others, self.size_factor); self.systems];
        train_lengths[self.systems - 1] = scaled(scarce, self.size_factor);
        let kind = match self.structure {
            Structure::CommonSparsity => FamilyKind::CommonSparsity { density: self.density },
            Structure::LinearCombination => FamilyKind::LinearCombination {
                basis_rank: self.basis_rank,
            },
        };
        let seed_index = seed_index as u64;
        let config = ExperimentConfig {
            mode: Mode::Generate,
            family: Some(SimilarFamilySpec {
                kind,
                state_dim: self.state_dim,
                input_dim: self.input_dim,
                systems: self.systems,
                spectral_radius_cap: self.spectral_radius_cap,
                noise_std: self.noise_std,
                seed: derive_seed(self.base_seed, 21, seed_index),
            }),
            data_paths: None,
            b_paths: None,
            truth_paths: None,
            input_signal: self.input_signal,
            method,
            solver: self.solver.clone(),
            cv: (method != Method::Ls && self.solver.lambda.is_none()).then(|| self.cv.clone()),
            train_lengths,
            test_length: self.test_length,
            output_path: None,
            seed: derive_seed(self.base_seed, 22, seed_index),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Runs least squares and the structure's multi-task method on every case
/// and seed. With `output_dir` set, writes one record per run plus
/// `curve.csv` and `report.json`.
pub fn run_replication(config: &ReplicateConfig) -> CliResult<ReplicationReport> {
    config.validate()?;
    let last = config.systems - 1;
    let methods = [Method::Ls, config.mt_method()];
    let mut records = Vec::new();
    let mut curve = Vec::new();
    for &case in &config.cases {
        let mut per_method: Vec<Vec<ResultsRecord>> = vec![Vec::new(); methods.len()];
        for seed in 0..config.seeds {
            for (m, &method) in methods.iter().enumerate() {
                let experiment = config.experiment(case, seed, method)?;
                let record = run_experiment(&experiment)?;
                if let Some(dir) = &config.output_dir {
                    let name = format!("case{case}_seed{seed}_{}.json", method.as_str());
                    export_results(&record, &dir.join(name))?;
                }
                per_method[m].push(record);
            }
        }
        let baseline: Vec<f64> = per_method[0].iter().map(|r| r.systems[last].prediction_error).collect();
        for (method, runs) in methods.iter().zip(&per_method) {
            let count = runs.len() as f64;
            let scarce: Vec<f64> = runs.iter().map(|r| r.systems[last].prediction_error).collect();
            curve.push(CurvePoint {
                case,
                method: method.as_str().to_string(),
                scarce_pairs: runs[0].systems[last].train_pairs,
                other_pairs: runs[0].systems[0].train_pairs,
                mean_error: runs.iter().map(|r| r.mean_prediction_error).sum::<f64>() / count,
                scarce_error: scarce.iter().sum::<f64>() / count,
                scarce_wins: scarce.iter().zip(&baseline).filter(|(e, b)| e < b).count(),
                seeds: runs.len(),
            });
        }
        records.extend(per_method.into_iter().flatten());
    }
    let report = ReplicationReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        curve,
        records,
    };
    if let Some(dir) = &config.output_dir {
        write_curve(&report.curve, &dir.join("curve.csv"))?;
        let text = serde_json::to_string_pretty(&report).expect("report fields are always serializable") + "\n";
        let path = dir.join("report.json");
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(report)
}

pub fn write_curve(curve: &[CurvePoint], path: &Path) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    for point in curve {
        writer.serialize(point).map_err(|e| CliError::io(path, e.into()))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}
