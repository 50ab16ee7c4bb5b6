use std::path::Path;

use aga_cli::{run_command, Cli, CliError, Report, RunConfig};
use clap::Parser;

fn aga(args: &[&str]) -> i32 {
    let mut argv = vec!["aga"];
    argv.extend_from_slice(args);
    run_command(argv)
}

fn tiny_config(dir: &Path) -> String {
    let config = serde_json::json!({
        "synthetic": { "n_classes": 4, "n_seen": 2, "dim": 12, "samples_per_class": 30 },
        "grids": [
            { "attribute": "depth", "l0": 0.0, "h0": 4.0, "step": 3.5, "range_max": 7.5, "targets": [1.0, 6.0] }
        ],
        "regressor": { "epochs": 2, "batch_size": 24 },
        "synthesis": { "epochs": 2 },
        "eval": { "n_trials": 4 }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(aga(&["frobnicate"]), 1);
    assert_eq!(aga(&[]), 1);
    assert_eq!(aga(&["--help"]), 0);
}

#[test]
fn invalid_config_names_the_field_and_runs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{ "synthesis": { "lambda": -1.0 } }"#).unwrap();
    let cli = Cli::parse_from(["aga", "gen-data", "--config", bad.to_str().unwrap()]);
    match cli.global.resolve() {
        Err(CliError::Validation(m)) => assert!(m.contains("synthesis") && m.contains("lambda"), "{m}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
    assert_eq!(aga(&["gen-data", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
    assert!(!out.exists());

    std::fs::write(&bad, r#"{ "eval": { "k_shots": 3 } }"#).unwrap();
    let cli = Cli::parse_from(["aga", "gen-data", "--config", bad.to_str().unwrap()]);
    match cli.global.resolve() {
        Err(CliError::Validation(m)) => assert!(m.contains("eval") && m.contains("k_shots"), "{m}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let cli = Cli::parse_from([
        "aga", "eval-oneshot", "--config", &config, "--seed", "5", "--trials", "9", "--k-shot", "3", "--lambda", "0.5",
        "--out", "elsewhere",
    ]);
    let c = cli.global.resolve().unwrap();
    assert_eq!((c.eval.n_trials, c.eval.k_shot, c.synthesis.lambda), (9, 3, 0.5));
    assert_eq!((c.synthetic.seed, c.regressor.seed, c.synthesis.seed, c.eval.base_seed), (5, 5, 5, 5));
    assert_eq!(c.out, Path::new("elsewhere"));
    assert_eq!(c.synthetic.dim, 12);
    assert_eq!(c.regressor.learning_rate, RunConfig::default().regressor.learning_rate);
}

#[test]
fn missing_prerequisites_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(aga(&["train-regressor", "--config", &config, "--out", o]), 1);
    assert_eq!(aga(&["gen-data", "--config", &config, "--out", o]), 0);
    assert_eq!(aga(&["train-bank", "--config", &config, "--out", o]), 1);
    assert_eq!(aga(&["eval-oneshot", "--config", &config, "--out", o]), 1);

    std::fs::write(out.join("regressors.aga"), b"AGA1 but not really").unwrap();
    assert_eq!(aga(&["train-bank", "--config", &config, "--out", o]), 1);
}

#[test]
fn pipeline_writes_reports_that_render() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    for step in [&["gen-data"][..], &["train-regressor", "--per-object"], &["train-bank"], &["eval-oneshot"]] {
        let mut args = step.to_vec();
        args.extend_from_slice(&["--config", &config, "--out", o, "--jobs", "2"]);
        assert_eq!(aga(&args), 0, "{step:?}");
    }
    let synthesized = dir.path().join("aug.csv");
    assert_eq!(
        aga(&["synthesize", "--config", &config, "--out", o, "--output", synthesized.to_str().unwrap()]),
        0
    );
    let aug = aga_core::io::load_dataset(&synthesized).unwrap();
    assert!(!aug.is_empty());
    assert!(aug.samples.iter().all(|s| s.features.iter().all(|v| *v >= 0.0)));

    match Report::load(&out.join("oneshot_k1.json")).unwrap() {
        Report::Oneshot { config, body } => {
            assert_eq!(config.synthetic.dim, 12);
            assert_eq!(body.n_trials, 4);
            assert_eq!(body.classes.len(), 2);
        }
        other => panic!("unexpected report {other:?}"),
    }
    match Report::load(&out.join("regressor_report.json")).unwrap() {
        Report::Regressor { body, .. } => {
            assert_eq!(body.per_object.len(), 1);
            assert_eq!(body.per_object[0].classes.len(), 4);
        }
        other => panic!("unexpected report {other:?}"),
    }
    let text = std::fs::read_to_string(out.join("bank_report.txt")).unwrap();
    assert!(text.contains("synthesis bank: 4 functions"), "{text}");
    assert_eq!(aga(&["report", "--out", o]), 0);
    assert_eq!(aga(&["report", out.join("dataset.bin").to_str().unwrap()]), 1);
}
