//! Command-line surface. Flags build a TOML table; a `--config` file is
//! overlaid on top of it, so file values win over flags.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;
use toml::{Table, Value};

use crate::config::{merge_tables, parse_table, CvSettings, ExperimentConfig, Mode};
use crate::diagnose::{run_diagnostics, DiagnoseConfig};
use crate::error::{CliError, CliResult};
use crate::experiment::{generate_dataset, prepare, run_experiment, select_lambda};
use crate::io::{export_trajectory, write_matrix};
use crate::replicate::{run_replication, ReplicateConfig};

#[derive(Debug, Parser)]
#[command(name = "mtsysid", version, about = "Joint identification of similar linear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a family and write trajectories, input matrices and true matrices as CSV.
    Generate {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit the configured method and print the results record.
    Fit(ExperimentArgs),
    /// Cross-validate the primary weight and print the scores.
    Cv(ExperimentArgs),
    /// Monte-Carlo check of the prediction-error bounds.
    Diagnose(DiagnoseArgs),
    /// Least squares against the multi-task method over the case grid.
    ReplicateSynthetic(ReplicateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML file; its values override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    /// common-sparsity, small-heterogeneity or linear-combination.
    #[arg(long)]
    pub family_kind: Option<String>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub basis_rank: Option<usize>,
    #[arg(long)]
    pub state_dim: Option<usize>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub systems: Option<usize>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub spectral_radius_cap: Option<f64>,
    #[arg(long)]
    pub family_seed: Option<u64>,
    #[arg(long = "data", value_delimiter = ',')]
    pub data_paths: Vec<PathBuf>,
    #[arg(long = "b", value_delimiter = ',')]
    pub b_paths: Vec<PathBuf>,
    #[arg(long = "truth", value_delimiter = ',')]
    pub truth_paths: Vec<PathBuf>,
    /// ones or gaussian.
    #[arg(long)]
    pub input_signal: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub accelerated: bool,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub rel_tolerance: Option<f64>,
    #[arg(long)]
    pub cv_folds: Option<usize>,
    #[arg(long)]
    pub cv_points: Option<usize>,
    #[arg(long)]
    pub cv_low_fraction: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub train_lengths: Vec<usize>,
    #[arg(long)]
    pub test_length: Option<usize>,
    #[arg(long = "output")]
    pub output_path: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// truth or oracle.
    #[arg(long)]
    pub bound: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub phi_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// common-sparsity or linear-combination.
    #[arg(long)]
    pub structure: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub cases: Vec<usize>,
    #[arg(long)]
    pub size_factor: Option<f64>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn put(table: &mut Table, key: &str, value: Option<impl Into<Value>>) {
    if let Some(v) = value {
        table.insert(key.to_string(), v.into());
    }
}

fn put_list<T: Clone + Into<Value>>(table: &mut Table, key: &str, values: &[T]) {
    if !values.is_empty() {
        table.insert(key.to_string(), Value::Array(values.iter().cloned().map(Into::into).collect()));
    }
}

fn path_values(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn to_int(v: impl TryInto<i64>) -> Option<i64> {
    v.try_into().ok()
}

fn sub_table(table: &mut Table, key: &str, inner: Table) {
    if !inner.is_empty() {
        let mut base = Table::new();
        base.insert(key.to_string(), Value::Table(inner));
        merge_tables(table, base);
    }
}

impl ExperimentArgs {
    fn flag_table(&self) -> Table {
        let mut t = Table::new();
        put(&mut t, "mode", self.mode.clone());
        put(&mut t, "method", self.method.clone());
        put(&mut t, "input_signal", self.input_signal.clone());
        put(&mut t, "test_length", self.test_length.and_then(to_int));
        put(&mut t, "seed", self.seed.and_then(to_int));
        put(&mut t, "output_path", self.output_path.as_ref().map(|p| p.display().to_string()));
        put_list(&mut t, "data_paths", &path_values(&self.data_paths));
        put_list(&mut t, "b_paths", &path_values(&self.b_paths));
        put_list(&mut t, "truth_paths", &path_values(&self.truth_paths));
        let lengths: Vec<i64> = self.train_lengths.iter().filter_map(|&l| to_int(l)).collect();
        put_list(&mut t, "train_lengths", &lengths);

        let mut family = Table::new();
        put(&mut family, "kind", self.family_kind.clone());
        put(&mut family, "density", self.density);
        put(&mut family, "epsilon", self.epsilon);
        put(&mut family, "basis_rank", self.basis_rank.and_then(to_int));
        put(&mut family, "state_dim", self.state_dim.and_then(to_int));
        put(&mut family, "input_dim", self.input_dim.and_then(to_int));
        put(&mut family, "systems", self.systems.and_then(to_int));
        put(&mut family, "noise_std", self.noise_std);
        put(&mut family, "spectral_radius_cap", self.spectral_radius_cap);
        put(&mut family, "seed", self.family_seed.and_then(to_int));
        sub_table(&mut t, "family", family);

        let mut solver = Table::new();
        put(&mut solver, "lambda", self.lambda);
        put(&mut solver, "lambda1", self.lambda1);
        put(&mut solver, "accelerated", self.accelerated.then_some(true));
        put(&mut solver, "max_iterations", self.max_iterations.and_then(to_int));
        put(&mut solver, "rel_tolerance", self.rel_tolerance);
        sub_table(&mut t, "solver", solver);

        let mut cv = Table::new();
        put(&mut cv, "folds", self.cv_folds.and_then(to_int));
        put(&mut cv, "points", self.cv_points.and_then(to_int));
        put(&mut cv, "low_fraction", self.cv_low_fraction);
        sub_table(&mut t, "cv", cv);
        t
    }

    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let config: ExperimentConfig = resolve_table(self.flag_table(), self.config.as_deref())?;
        config.validate()?;
        Ok(config)
    }
}

impl DiagnoseArgs {
    pub fn resolve(&self) -> CliResult<DiagnoseConfig> {
        let mut t = defaults(&DiagnoseConfig::default())?;
        put(&mut t, "bound", self.bound.clone());
        put(&mut t, "trials", self.trials.and_then(to_int));
        put(&mut t, "phi_samples", self.phi_samples.and_then(to_int));
        put(&mut t, "seed", self.seed.and_then(to_int));
        resolve_table(t, self.config.as_deref())
    }
}

impl ReplicateArgs {
    pub fn resolve(&self) -> CliResult<ReplicateConfig> {
        let mut t = defaults(&ReplicateConfig::default())?;
        put(&mut t, "structure", self.structure.clone());
        let cases: Vec<i64> = self.cases.iter().filter_map(|&c| to_int(c)).collect();
        put_list(&mut t, "cases", &cases);
        put(&mut t, "size_factor", self.size_factor);
        put(&mut t, "seeds", self.seeds.and_then(to_int));
        put(&mut t, "base_seed", self.base_seed.and_then(to_int));
        put(&mut t, "output_dir", self.output_dir.as_ref().map(|p| p.display().to_string()));
        let config: ReplicateConfig = resolve_table(t, self.config.as_deref())?;
        config.validate()?;
        Ok(config)
    }
}

/// Defaults as a table, so partial nested tables in a file keep the
/// remaining defaults.
fn defaults(value: &impl serde::Serialize) -> CliResult<Table> {
    Table::try_from(value).map_err(|e| CliError::Config(e.to_string()))
}

/// Overlays the optional config file on the flag table and deserializes.
fn resolve_table<T: DeserializeOwned>(mut flags: Table, file: Option<&Path>) -> CliResult<T> {
    let mut file_text = None;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        merge_tables(&mut flags, parse_table(&text, path)?);
        file_text = Some(text);
    }
    let merged = toml::to_string(&flags).map_err(|e| CliError::Config(e.to_string()))?;
    toml::from_str(&merged).map_err(|e| {
        let key = e.span().and_then(|span| {
            let start = merged[..span.start].rfind('\n').map_or(0, |i| i + 1);
            merged[start..].split('=').next().map(|k| k.trim().to_string())
        });
        let message = match &key {
            Some(k) if !k.is_empty() && !k.starts_with('[') => format!("field `{k}`: {}", e.message()),
            _ => e.message().to_string(),
        };
        // Point at the file line that set the key, when the file set it.
        let line = key.zip(file_text.as_deref()).and_then(|(k, text)| {
            text.lines()
                .position(|l| l.split('=').next().is_some_and(|lhs| lhs.trim() == k))
                .map(|i| i as u64 + 1)
        });
        match (file, line) {
            (Some(path), Some(line)) => CliError::parse(path, line, message),
            _ => CliError::Config(message),
        }
    })
}

/// Writes `system_i.csv`, `b_i.csv` and `a_i.csv` (1-based) plus an
/// `ingest.toml` that fits the written files with the same settings.
pub fn write_generated(config: &ExperimentConfig, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    if config.mode != Mode::Generate {
        return Err(CliError::Config("generate needs mode = \"generate\"".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let (dataset, truth) = generate_dataset(config)?;
    let mut written = Vec::new();
    let (mut data_paths, mut b_paths, mut truth_paths) = (Vec::new(), Vec::new(), Vec::new());
    for (i, (entry, a)) in dataset.entries().iter().zip(truth.iter()).enumerate() {
        let data = out_dir.join(format!("system_{}.csv", i + 1));
        let b = out_dir.join(format!("b_{}.csv", i + 1));
        let a_path = out_dir.join(format!("a_{}.csv", i + 1));
        export_trajectory(&entry.trajectory, &data)?;
        write_matrix(&entry.b_matrix, &b)?;
        write_matrix(a, &a_path)?;
        data_paths.push(data);
        b_paths.push(b);
        truth_paths.push(a_path);
    }
    let ingest = ExperimentConfig {
        mode: Mode::Ingest,
        family: None,
        data_paths: Some(data_paths.clone()),
        b_paths: Some(b_paths.clone()),
        truth_paths: Some(truth_paths.clone()),
        output_path: None,
        ..config.clone()
    };
    let ingest_path = out_dir.join("ingest.toml");
    let text = toml::to_string(&ingest).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(&ingest_path, text).map_err(|e| CliError::io(&ingest_path, e))?;
    written.extend(data_paths);
    written.extend(b_paths);
    written.extend(truth_paths);
    written.push(ingest_path);
    Ok(written)
}

fn pretty(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("outputs are always serializable")
}

/// Runs one subcommand and returns the JSON it prints on success.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Generate { experiment, out_dir } => {
            let config = experiment.resolve()?;
            let files = write_generated(&config, out_dir)?;
            Ok(pretty(&json!({ "files": files })))
        }
        Command::Fit(args) => Ok(run_experiment(&args.resolve()?)?.to_json()),
        Command::Cv(args) => {
            let config = args.resolve()?;
            let settings = config.cv.clone().unwrap_or_else(CvSettings::default);
            let data = prepare(&config)?;
            Ok(pretty(&select_lambda(&data, &config, &settings)?))
        }
        Command::Diagnose(args) => {
            let report = run_diagnostics(&args.resolve()?)?;
            let text = pretty(&report);
            if let Some(path) = &args.output {
                std::fs::write(path, format!("{text}\n")).map_err(|e| CliError::io(path, e))?;
            }
            Ok(text)
        }
        Command::ReplicateSynthetic(args) => {
            let report = run_replication(&args.resolve()?)?;
            Ok(pretty(&json!({ "schema_version": report.schema_version, "curve": report.curve })))
        }
    }
}
