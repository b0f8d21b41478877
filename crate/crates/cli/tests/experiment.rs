use std::process::Command;

use mtsysid::{ls_estimate, prediction_error_score, FamilyKind, RegressionData, SimilarFamilySpec};
use mtsysid_cli::command::write_generated;
use mtsysid_cli::experiment::prepare;
use mtsysid_cli::{run_experiment, CliError, CvSettings, ExperimentConfig, Method, Mode};
use tempfile::TempDir;

fn generated(method: Method, noise: f64) -> ExperimentConfig {
    ExperimentConfig {
        mode: Mode::Generate,
        family: Some(SimilarFamilySpec {
            kind: FamilyKind::CommonSparsity { density: 0.4 },
            state_dim: 4,
            input_dim: 2,
            systems: 3,
            spectral_radius_cap: 0.9,
            noise_std: noise,
            seed: 8,
        }),
        data_paths: None,
        b_paths: None,
        truth_paths: None,
        input_signal: mtsysid::InputSignal::Gaussian,
        method,
        solver: Default::default(),
        cv: None,
        train_lengths: vec![40, 30, 12],
        test_length: 15,
        output_path: None,
        seed: 5,
    }
}

fn mt(lambda: f64) -> ExperimentConfig {
    let mut c = generated(Method::MtGroup, 0.1);
    c.solver.lambda = Some(lambda);
    c
}

#[test]
fn identical_config_gives_identical_record() {
    for config in [generated(Method::Ls, 0.1), mt(0.5)] {
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.without_runtime().to_json(), b.without_runtime().to_json());
    }
}

#[test]
fn cross_validated_run_is_deterministic() {
    let mut c = generated(Method::MtGroup, 0.1);
    c.cv = Some(CvSettings {
        folds: 3,
        points: 5,
        ..CvSettings::default()
    });
    let a = run_experiment(&c).unwrap();
    let b = run_experiment(&c).unwrap();
    assert_eq!(a.without_runtime(), b.without_runtime());
    let cv = a.cv.as_ref().unwrap();
    assert_eq!(a.lambda, Some(cv.best_lambda));
    assert_eq!(cv.grid.len(), 5);
}

#[test]
fn ls_through_the_runner_matches_direct_estimates() {
    let config = generated(Method::Ls, 0.1);
    let data = prepare(&config).unwrap();
    let record = run_experiment(&config).unwrap();
    for (i, entry) in data.train.entries().iter().enumerate() {
        let direct = ls_estimate(&entry.trajectory, &entry.b_matrix).unwrap().a_matrix;
        let score = prediction_error_score(&direct, &data.test[i]).unwrap();
        assert_eq!(record.systems[i].prediction_error, score);
    }
    assert!(record.objective.is_none() && record.lambda.is_none());
}

#[test]
fn noise_free_ls_identifies_exactly() {
    let record = run_experiment(&generated(Method::Ls, 0.0)).unwrap();
    for s in &record.systems {
        assert!(s.prediction_error < 1e-8, "{s:?}");
        assert!(s.frobenius_error.unwrap() < 1e-8);
    }
}

#[test]
fn test_pairs_come_from_the_tail() {
    let config = generated(Method::Ls, 0.1);
    let data = prepare(&config).unwrap();
    let (full, _) = mtsysid_cli::experiment::generate_dataset(&config).unwrap();
    for (i, entry) in full.entries().iter().enumerate() {
        let all = RegressionData::from_trajectory(&entry.trajectory, &entry.b_matrix).unwrap();
        let tail: Vec<usize> = (all.len() - 15..all.len()).collect();
        assert_eq!(data.test[i], all.select(&tail));
        assert_eq!(data.train.entries()[i].trajectory.len(), config.train_lengths[i]);
    }
}

#[test]
fn export_then_ingest_reproduces_the_record() {
    let dir = TempDir::new().unwrap();
    let config = mt(0.3);
    write_generated(&config, dir.path()).unwrap();
    let ingest = ExperimentConfig::load(&dir.path().join("ingest.toml")).unwrap();
    assert_eq!(ingest.mode, Mode::Ingest);
    let a = run_experiment(&config).unwrap();
    let b = run_experiment(&ingest).unwrap();
    assert_eq!(a.systems, b.systems);
    assert_eq!(a.objective, b.objective);
    assert_eq!(a.lambda, b.lambda);
}

#[test]
fn ingest_without_truth_has_no_frobenius_fields() {
    let dir = TempDir::new().unwrap();
    let config = generated(Method::Ls, 0.1);
    write_generated(&config, dir.path()).unwrap();
    let mut ingest = ExperimentConfig::load(&dir.path().join("ingest.toml")).unwrap();
    ingest.truth_paths = None;
    ingest.output_path = Some(dir.path().join("out.json"));
    let record = run_experiment(&ingest).unwrap();
    assert!(record.mean_frobenius_error.is_none());
    let text = std::fs::read_to_string(dir.path().join("out.json")).unwrap();
    assert!(!text.contains("frobenius"));
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = TempDir::new().unwrap();
    write_generated(&generated(Method::Ls, 0.1), dir.path()).unwrap();
    let mut long = ExperimentConfig::load(&dir.path().join("ingest.toml")).unwrap();
    long.train_lengths[0] = 41;
    assert!(matches!(run_experiment(&long), Err(CliError::Input(_))));

    let mut short = generated(Method::Ls, 0.1);
    short.train_lengths.pop();
    assert!(matches!(run_experiment(&short), Err(CliError::Config(_))));

    let unweighted = generated(Method::MtNuclear, 0.1);
    assert!(matches!(run_experiment(&unweighted), Err(CliError::Config(_))));

    let mut both = generated(Method::Ls, 0.1);
    both.data_paths = Some(vec!["x.csv".into(); 3]);
    assert!(matches!(run_experiment(&both), Err(CliError::Config(_))));

    let mut folds = mt(0.1);
    folds.cv = Some(CvSettings {
        folds: 1,
        ..CvSettings::default()
    });
    assert_eq!(run_experiment(&folds).unwrap_err().exit_code(), 2);
}

#[test]
fn config_parse_errors_carry_a_line() {
    let text = "mode = \"generate\"\nmethod = \"ls\"\ntrain_lengths = [1,\n";
    let err = ExperimentConfig::from_toml_str(text, std::path::Path::new("c.toml")).unwrap_err();
    assert_eq!(err.category(), "parse");
    let text = "mode = \"generate\"\nmethod = \"lasso\"\n";
    match ExperimentConfig::from_toml_str(text, std::path::Path::new("c.toml")).unwrap_err() {
        CliError::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mtsysid"))
}

#[test]
fn binary_reports_categories_and_exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "mode = \"generate\"\nmethod = 3\n").unwrap();
    let out = binary().args(["fit", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["category"], "parse");

    let out = binary()
        .args(["fit", "--mode", "ingest", "--method", "ls", "--data", "/nonexistent.csv"])
        .args(["--train-lengths", "3", "--test-length", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["category"], "io");
}

#[test]
fn binary_generates_and_fits_with_file_overriding_flags() {
    let dir = TempDir::new().unwrap();
    let gen = dir.path().join("gen");
    let out = binary()
        .args(["generate", "--mode", "generate", "--method", "ls", "--family-kind", "common-sparsity"])
        .args(["--density", "0.5", "--state-dim", "3", "--input-dim", "1", "--systems", "2"])
        .args(["--noise-std", "0.1", "--family-seed", "1", "--train-lengths", "30,20"])
        .args(["--test-length", "10", "--seed", "2", "--out-dir"])
        .arg(&gen)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["system_1.csv", "system_2.csv", "b_1.csv", "a_2.csv", "ingest.toml"] {
        assert!(gen.join(name).exists(), "{name}");
    }
    // The file says ls; the flag asking for mt-nuclear loses.
    let out = binary()
        .args(["fit", "--method", "mt-nuclear", "--config"])
        .arg(gen.join("ingest.toml"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record = mtsysid_cli::ResultsRecord::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(record.method, "ls");
    assert_eq!(record.systems[1].train_pairs, 20);

    let out = binary()
        .args(["cv", "--method", "mt-group", "--cv-folds", "2", "--cv-points", "4", "--config"])
        .arg(gen.join("ingest.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "ls has no weight to cross-validate");
}
