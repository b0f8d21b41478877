use std::time::Instant;

use mtsysid::analysis::{default_grid, log_grid};
use mtsysid::{
    cross_validate, frobenius_errors, generate_family, ls_estimate, prediction_error_score, simulate_family, solve,
    CvResult, MatrixBundle, MultiSystemDataset, RegressionData, SolveReport, SystemRecord, Trajectory,
};
use nalgebra::DMatrix;

use crate::config::{CvSettings, ExperimentConfig, Method, Mode};
use crate::error::{CliError, CliResult};
use crate::io::{export_results, ingest_trajectory, read_bundle, read_matrix};
use crate::record::{ObjectiveSummary, ResultsRecord, SystemResult, SCHEMA_VERSION};

/// Training windows, held-out pairs and (when known) the true matrices.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: MultiSystemDataset,
    pub test: Vec<RegressionData>,
    pub truth: Option<MatrixBundle>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub bundle: MatrixBundle,
    pub lambda: Option<f64>,
    pub report: Option<SolveReport>,
    pub cv: Option<CvResult>,
}

/// Full dataset and truth as produced by generate mode.
pub fn generate_dataset(config: &ExperimentConfig) -> CliResult<(MultiSystemDataset, MatrixBundle)> {
    let family = config
        .family
        .as_ref()
        .ok_or_else(|| CliError::Config("generate mode needs a [family] table".into()))?;
    let generated = generate_family(family)?;
    let lengths: Vec<usize> = config.train_lengths.iter().map(|t| t + config.test_length).collect();
    let dataset = simulate_family(&generated, &lengths, config.input_signal, config.seed)?;
    Ok((dataset, generated.truth()))
}

fn ingest_dataset(config: &ExperimentConfig) -> CliResult<(MultiSystemDataset, Option<MatrixBundle>)> {
    let paths = config.data_paths.as_deref().unwrap_or_default();
    let mut entries = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        let trajectory = ingest_trajectory(path)?;
        let b_matrix = match &config.b_paths {
            Some(b) => read_matrix(&b[i])?,
            None if trajectory.input_dim() == 0 => DMatrix::zeros(trajectory.state_dim(), 0),
            None => {
                return Err(CliError::Input(format!(
                    "{} has {} input columns; supply b_paths",
                    path.display(),
                    trajectory.input_dim()
                )))
            }
        };
        entries.push(SystemRecord { trajectory, b_matrix });
    }
    let dataset = MultiSystemDataset::new(entries)?;
    let truth = config.truth_paths.as_ref().map(|p| read_bundle(p)).transpose()?;
    Ok((dataset, truth))
}

fn split(dataset: &MultiSystemDataset, config: &ExperimentConfig) -> CliResult<(MultiSystemDataset, Vec<RegressionData>)> {
    let mut train = Vec::with_capacity(dataset.len());
    let mut test = Vec::with_capacity(dataset.len());
    for (i, (entry, &len)) in dataset.entries().iter().zip(&config.train_lengths).enumerate() {
        let available = entry.trajectory.len();
        if len + config.test_length > available {
            return Err(CliError::Input(format!(
                "system {i}: {len} training + {} test pairs exceed the {available} available",
                config.test_length
            )));
        }
        train.push(SystemRecord {
            trajectory: entry.trajectory.window(0, len)?,
            b_matrix: entry.b_matrix.clone(),
        });
        let tail: Trajectory = entry.trajectory.window(available - config.test_length, config.test_length)?;
        test.push(RegressionData::from_trajectory(&tail, &entry.b_matrix)?);
    }
    Ok((MultiSystemDataset::new(train)?, test))
}

pub fn prepare(config: &ExperimentConfig) -> CliResult<PreparedData> {
    config.validate()?;
    let (dataset, truth) = match config.mode {
        Mode::Generate => {
            let (d, t) = generate_dataset(config)?;
            (d, Some(t))
        }
        Mode::Ingest => ingest_dataset(config)?,
    };
    if let Some(t) = &truth {
        if t.len() != dataset.len() || t.dim() != dataset.state_dim() {
            return Err(CliError::Input("truth matrices do not match the trajectories".into()));
        }
    }
    let (train, test) = split(&dataset, config)?;
    Ok(PreparedData { train, test, truth })
}

/// Cross-validates the configured method's primary weight on the training windows.
pub fn select_lambda(data: &PreparedData, config: &ExperimentConfig, settings: &CvSettings) -> CliResult<CvResult> {
    if config.method == Method::Ls {
        return Err(CliError::Config("method ls has no weight to cross-validate".into()));
    }
    let base = config.solver_config(0.0);
    let grid = match &settings.grid {
        Some(g) => g.clone(),
        None => {
            let regressions = RegressionData::from_dataset(&data.train)?;
            let top = default_grid(&regressions, base.regularizer.kind, 2)[1];
            log_grid(settings.low_fraction * top, top, settings.points)
        }
    };
    Ok(cross_validate(&data.train, &base, Some(&grid), settings.folds)?)
}

pub fn estimate(data: &PreparedData, config: &ExperimentConfig) -> CliResult<Estimate> {
    if config.method == Method::Ls {
        let mats = data
            .train
            .entries()
            .iter()
            .map(|e| Ok(ls_estimate(&e.trajectory, &e.b_matrix)?.a_matrix))
            .collect::<CliResult<Vec<_>>>()?;
        return Ok(Estimate {
            bundle: MatrixBundle::new(mats)?,
            lambda: None,
            report: None,
            cv: None,
        });
    }
    let cv = config.cv.as_ref().map(|s| select_lambda(data, config, s)).transpose()?;
    let lambda = match (&cv, config.solver.lambda) {
        (Some(cv), _) => cv.best_lambda,
        (None, Some(l)) => l,
        (None, None) => unreachable!("validated"),
    };
    let (bundle, report) = solve(&data.train, &config.solver_config(lambda), None)?;
    Ok(Estimate {
        bundle,
        lambda: Some(lambda),
        report: Some(report),
        cv,
    })
}

/// Builds or loads the data, fits the configured method, scores it on the
/// held-out tail, and writes the record when `output_path` is set.
pub fn run_experiment(config: &ExperimentConfig) -> CliResult<ResultsRecord> {
    let started = Instant::now();
    let data = prepare(config)?;
    let fit = estimate(&data, config)?;

    let frob = data
        .truth
        .as_ref()
        .map(|t| frobenius_errors(&fit.bundle, t))
        .transpose()?;
    let mut systems = Vec::with_capacity(data.test.len());
    for (i, (a, test)) in fit.bundle.iter().zip(&data.test).enumerate() {
        systems.push(SystemResult {
            index: i,
            train_pairs: config.train_lengths[i],
            test_pairs: test.len(),
            prediction_error: prediction_error_score(a, test)?,
            frobenius_error: frob.as_ref().map(|f| f[i]),
        });
    }
    let count = systems.len() as f64;
    let record = ResultsRecord {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        method: config.method.as_str().to_string(),
        mean_prediction_error: systems.iter().map(|s| s.prediction_error).sum::<f64>() / count,
        mean_frobenius_error: frob.map(|f| f.iter().sum::<f64>() / count),
        systems,
        lambda: fit.lambda,
        objective: fit.report.map(|r| ObjectiveSummary {
            initial: r.objective_trace[0],
            last: *r.objective_trace.last().expect("trace holds the initial value"),
            iterations: r.iterations,
            converged: r.converged,
            final_step: r.final_step,
        }),
        cv: fit.cv,
        runtime_seconds: started.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    if let Some(path) = &config.output_path {
        export_results(&record, path)?;
    }
    Ok(record)
}
