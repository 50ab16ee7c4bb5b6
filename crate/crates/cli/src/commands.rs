use std::path::{Path, PathBuf};

use aga_core::eval::{run_trials, ClassPool, TrialConfig};
use aga_core::io::{
    generate_synthetic, load_dataset, load_model, save_dataset, save_model, ArchiveRecord, FeatureDataset, ModelArchive,
};
use aga_core::regressor::{mae_tables, median_absolute_error, train_regressor_logged, AttributeRegressor};
use aga_core::synthesis::{augment, evaluate_bank, train_bank, SynthesisBank};
use aga_core::AttributeSample;
use log::info;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{BankReport, FunctionSummary, HeldOutMae, RegressorReport, Report};

pub const REGRESSORS: &str = "regressors.aga";
pub const BANK: &str = "bank.aga";

fn ensure_out(config: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", config.out.display())))
}

fn require(path: &Path, hint: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{} does not exist ({hint})", path.display())))
    }
}

/// Input files that fail to parse are the caller's problem (exit 1).
fn input<T>(r: aga_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Validation(e.to_string()))
}

/// The dataset plus its seen / unseen class split.
struct Corpus {
    data: FeatureDataset,
    seen: Vec<String>,
    unseen: Vec<String>,
}

fn load_corpus(config: &RunConfig) -> Result<Corpus, CliError> {
    let path = config.dataset_path();
    require(&path, "run gen-data or set `dataset`")?;
    let data = input(load_dataset(&path))?;
    let classes = data.classes();
    let seen: Vec<String> = if config.seen_classes.is_empty() {
        classes.iter().take(config.synthetic.n_seen).cloned().collect()
    } else {
        if let Some(c) = config.seen_classes.iter().find(|c| !classes.contains(c)) {
            return Err(CliError::Validation(format!(
                "config field `seen_classes`: class `{c}` is not in {}",
                path.display()
            )));
        }
        config.seen_classes.clone()
    };
    let unseen = classes.into_iter().filter(|c| !seen.contains(c)).collect();
    for a in config.attributes() {
        if !data.attribute_names.contains(&a) {
            return Err(CliError::Validation(format!(
                "grid attribute `{a}` is not a column of {}",
                path.display()
            )));
        }
    }
    Ok(Corpus { data, seen, unseen })
}

fn attribute_range(samples: &[AttributeSample], attribute: &str) -> f64 {
    let (lo, hi) = samples
        .iter()
        .filter_map(|s| s.attribute(attribute))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    (hi - lo).max(f64::MIN_POSITIVE)
}

fn held_out_mae(gamma: &AttributeRegressor, samples: &[AttributeSample]) -> Result<f64, CliError> {
    let preds = samples
        .iter()
        .map(|s| gamma.predict_attribute(&s.features))
        .collect::<aga_core::Result<Vec<_>>>()?;
    let truths: Vec<f64> = samples
        .iter()
        .map(|s| s.attribute(gamma.attribute()).unwrap_or(f64::NAN))
        .collect();
    Ok(median_absolute_error(&preds, &truths)?)
}

pub fn gen_data(config: &RunConfig) -> Result<(), CliError> {
    ensure_out(config)?;
    let (data, _) = generate_synthetic(&config.synthetic)?;
    let path = config.dataset_path();
    save_dataset(&data, &path)?;
    info!("wrote {} samples to {}", data.len(), path.display());
    Ok(())
}

pub fn train_regressor(config: &RunConfig, per_object: bool) -> Result<(), CliError> {
    let corpus = load_corpus(config)?;
    ensure_out(config)?;
    let (train, test) = corpus.data.filter_classes(&corpus.seen).split_per_class(config.synthetic.train_fraction);
    let unseen = corpus.data.filter_classes(&corpus.unseen);
    let mut records = Vec::new();
    let mut held_out = Vec::new();
    for attribute in config.attributes() {
        info!("training regressor for `{attribute}` on {} samples", train.len());
        let (gamma, losses) = train_regressor_logged(&train.samples, &attribute, &config.regressor)?;
        held_out.push(HeldOutMae {
            range: attribute_range(&corpus.data.samples, &attribute),
            seen_mae: held_out_mae(&gamma, &test.samples)?,
            unseen_mae: if unseen.is_empty() { None } else { Some(held_out_mae(&gamma, &unseen.samples)?) },
            epoch_loss: losses,
            attribute,
        });
        records.push(ArchiveRecord::Regressor(gamma));
    }
    let mut tables = Vec::new();
    if per_object {
        let (all_train, all_test) = corpus.data.split_per_class(config.synthetic.train_fraction);
        for attribute in config.attributes() {
            info!("agnostic vs per-object tables for `{attribute}`");
            tables.push(mae_tables(&all_train.samples, &all_test.samples, &attribute, &config.regressor)?);
        }
    }
    save_model(&ModelArchive::new(records), config.out.join(REGRESSORS))?;
    let report = Report::Regressor {
        config: config.clone(),
        body: RegressorReport {
            seen_classes: corpus.seen,
            held_out,
            per_object: tables,
        },
    };
    report.write(&config.out, "regressor_report")
}

pub fn train_bank_cmd(config: &RunConfig) -> Result<(), CliError> {
    let corpus = load_corpus(config)?;
    let gamma_path = config.out.join(REGRESSORS);
    require(&gamma_path, "run train-regressor first")?;
    let archive = input(load_model(&gamma_path))?;
    let grids = config.grids()?;
    let gammas = grids
        .iter()
        .map(|g| {
            archive
                .regressors()
                .find(|r| r.attribute() == g.attribute)
                .cloned()
                .ok_or_else(|| CliError::Validation(format!("{} has no regressor for `{}`", gamma_path.display(), g.attribute)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (train, test) = corpus.data.filter_classes(&corpus.seen).split_per_class(config.synthetic.train_fraction);

    let frozen = ModelArchive::new(gammas.iter().cloned().map(ArchiveRecord::Regressor).collect()).encode();
    info!("training bank on {} samples", train.len());
    let (bank, logs) = train_bank(&train.samples, &grids, &gammas, &config.synthesis)?;
    let after = ModelArchive::new(bank.attributes.iter().map(|a| ArchiveRecord::Regressor(a.gamma.clone())).collect()).encode();
    if frozen != after {
        return Err(CliError::Runtime("regressor parameters changed during bank training".into()));
    }
    save_model(&ModelArchive::from_bank(&bank), config.out.join(BANK))?;

    let mut eval_set = test.samples;
    eval_set.extend(corpus.data.filter_classes(&corpus.unseen).samples);
    let fidelity = evaluate_bank(&bank, &eval_set, &corpus.seen)?;
    let functions = logs
        .iter()
        .map(|l| FunctionSummary {
            attribute: l.attribute.clone(),
            interval: l.interval,
            target_index: l.target_index,
            subset_size: l.subset_size,
            first_loss: l.epoch_loss.first().copied().unwrap_or(f64::NAN),
            final_loss: l.final_loss(),
        })
        .collect();
    Report::Bank {
        config: config.clone(),
        body: BankReport { functions, fidelity },
    }
    .write(&config.out, "bank_report")
}

fn load_bank(config: &RunConfig) -> Result<SynthesisBank, CliError> {
    let path = config.out.join(BANK);
    require(&path, "run train-bank first")?;
    input(input(load_model(&path))?.to_bank())
}

pub fn synthesize(config: &RunConfig, from: Option<PathBuf>, to: Option<PathBuf>) -> Result<(), CliError> {
    let from = from.unwrap_or_else(|| config.dataset_path());
    require(&from, "pass --input")?;
    let source = input(load_dataset(&from))?;
    let bank = load_bank(config)?;
    if bank.dim() != Some(source.dim) {
        return Err(CliError::Validation(format!(
            "{} has D={} but the bank expects {:?}",
            from.display(),
            source.dim,
            bank.dim()
        )));
    }
    let mut out = FeatureDataset {
        samples: Vec::new(),
        provenance: format!("synthesized from {}", from.display()),
        ..source.clone()
    };
    for s in &source.samples {
        for a in augment(&bank, &s.features)? {
            let mut attributes = s.attributes.clone();
            attributes.insert(a.attribute, a.target);
            out.samples.push(AttributeSample {
                features: a.features,
                class_label: s.class_label.clone(),
                attributes,
            });
        }
    }
    ensure_out(config)?;
    let to = to.unwrap_or_else(|| config.out.join("synthesized.bin"));
    save_dataset(&out, &to)?;
    info!("wrote {} synthesized samples to {}", out.len(), to.display());
    Ok(())
}

pub fn eval_oneshot(config: &RunConfig) -> Result<(), CliError> {
    let corpus = load_corpus(config)?;
    if corpus.unseen.len() < 2 {
        return Err(CliError::Validation("evaluation needs at least two unseen classes".into()));
    }
    let bank = load_bank(config)?;
    let pool = ClassPool::from_dataset(&corpus.data.filter_classes(&corpus.unseen));
    let trial = TrialConfig {
        k_shot: config.eval.k_shot,
        svm: config.svm.clone(),
        max_synthesized: config.eval.max_synthesized,
    };
    info!("{} trials of {}-shot on {} classes", config.eval.n_trials, trial.k_shot, pool.classes.len());
    let report = run_trials(&pool, &bank, &trial, config.eval.n_trials, config.eval.base_seed)?;
    Report::Oneshot {
        config: config.clone(),
        body: report,
    }
    .write(&config.out, &format!("oneshot_k{}", config.eval.k_shot))
}

/// Renders the given reports, or every `*.json` report under `--out`.
pub fn report(config: &RunConfig, paths: Vec<PathBuf>) -> Result<String, CliError> {
    let paths = if paths.is_empty() {
        let mut found: Vec<PathBuf> = std::fs::read_dir(&config.out)
            .map_err(|e| CliError::Validation(format!("cannot list {}: {e}", config.out.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        found.sort();
        found
    } else {
        paths
    };
    let mut out = String::new();
    for p in paths {
        out.push_str(&format!("== {}\n", p.display()));
        out.push_str(&Report::load(&p)?.to_text());
        out.push('\n');
    }
    Ok(out)
}
