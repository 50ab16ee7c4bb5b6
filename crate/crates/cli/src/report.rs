//! JSON reports. Each embeds the resolved configuration it was produced with
//! and renders to a plain-text table; neither form carries timestamps.

use std::fmt::Write as _;
use std::path::Path;

use aga_core::eval::EvalReport;
use aga_core::regressor::MaeTable;
use aga_core::synthesis::BankEvaluation;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutMae {
    pub attribute: String,
    /// Observed attribute range in the dataset, `max - min`.
    pub range: f64,
    pub seen_mae: f64,
    pub unseen_mae: Option<f64>,
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorReport {
    pub seen_classes: Vec<String>,
    pub held_out: Vec<HeldOutMae>,
    /// Agnostic vs per-object tables on an all-class split (`--per-object`).
    pub per_object: Vec<MaeTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSummary {
    pub attribute: String,
    pub interval: usize,
    pub target_index: usize,
    pub subset_size: usize,
    pub first_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankReport {
    pub functions: Vec<FunctionSummary>,
    pub fidelity: BankEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Report {
    Regressor { config: RunConfig, body: RegressorReport },
    Bank { config: RunConfig, body: BankReport },
    Oneshot { config: RunConfig, body: EvalReport },
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read report {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: not a report: {e}", path.display())))
    }

    /// Writes `<stem>.json` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), CliError> {
        let write = |name: String, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))
        };
        write(format!("{stem}.json"), self.to_json())?;
        write(format!("{stem}.txt"), self.to_text())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Report::Regressor { body, .. } => {
                out.push_str("attribute regression (median absolute error)\n");
                let _ = writeln!(out, "{:<10} {:>10} {:>10} {:>8}", "attribute", "seen", "unseen", "% range");
                for h in &body.held_out {
                    let unseen = h.unseen_mae.map_or("-".to_owned(), |m| format!("{m:.4}"));
                    let _ = writeln!(
                        out,
                        "{:<10} {:>10.4} {:>10} {:>7.2}%",
                        h.attribute,
                        h.seen_mae,
                        unseen,
                        100.0 * h.seen_mae / h.range
                    );
                }
                for t in &body.per_object {
                    let _ = writeln!(out, "\n{}: per-class MAE", t.attribute);
                    let _ = writeln!(out, "{:<12} {:>10} {:>10}", "class", "agnostic", "per-object");
                    for ((c, a), p) in t.classes.iter().zip(&t.agnostic).zip(&t.per_object) {
                        let _ = writeln!(out, "{c:<12} {a:>10.4} {p:>10.4}");
                    }
                    let _ = writeln!(out, "{:<12} {:>10.4} {:>10.4}", "mean", t.mean_agnostic(), t.mean_per_object());
                }
            }
            Report::Bank { body, .. } => {
                let _ = writeln!(out, "synthesis bank: {} functions", body.functions.len());
                let _ = writeln!(out, "{:<10} {:>6} {:>8} {:>12}", "attribute", "seen", "mean rho", "median err");
                for (a, seen, rho, err) in &body.fidelity.pooled {
                    let _ = writeln!(out, "{a:<10} {:>6} {rho:>8.3} {err:>12.4}", if *seen { "yes" } else { "no" });
                }
            }
            Report::Oneshot { body, .. } => out.push_str(&body.to_table()),
        }
        out
    }
}
