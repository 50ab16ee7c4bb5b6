//! The declarative run configuration (JSON) and its validation.

use std::path::{Path, PathBuf};

use aga_core::grid::{build_grid, default_depth_targets, default_pose_targets, IntervalGrid};
use aga_core::io::SyntheticSpec;
use aga_core::regressor::RegressorTrainConfig;
use aga_core::svm::SvmConfig;
use aga_core::synthesis::SynthTrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One sliding-window grid: intervals `[l0 + j*step, h0 + j*step]` up to
/// `range_max`, and the targets `t_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub attribute: String,
    pub l0: f64,
    pub h0: f64,
    pub step: f64,
    pub range_max: f64,
    pub targets: Vec<f64>,
}

impl GridConfig {
    pub fn build(&self) -> aga_core::Result<IntervalGrid> {
        build_grid(&self.attribute, self.l0, self.h0, self.step, self.range_max, &self.targets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k_shot: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    pub max_synthesized: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_shot: 1,
            n_trials: 100,
            base_seed: 0,
            max_synthesized: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Feature dataset; `<out>/dataset.bin` when unset.
    pub dataset: Option<PathBuf>,
    /// Classes used for γ and the bank. Empty: the first `synthetic.n_seen`
    /// classes of the dataset, in order of appearance.
    pub seen_classes: Vec<String>,
    pub synthetic: SyntheticSpec,
    pub grids: Vec<GridConfig>,
    pub regressor: RegressorTrainConfig,
    pub synthesis: SynthTrainConfig,
    pub svm: SvmConfig,
    pub eval: EvalConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            seen_classes: Vec::new(),
            synthetic: SyntheticSpec::default(),
            grids: vec![
                GridConfig {
                    attribute: "depth".into(),
                    l0: 0.0,
                    h0: 1.0,
                    step: 0.5,
                    range_max: 7.5,
                    targets: default_depth_targets(),
                },
                GridConfig {
                    attribute: "pose".into(),
                    l0: 0.0,
                    h0: 45.0,
                    step: 25.0,
                    range_max: 180.0,
                    targets: default_pose_targets(),
                },
            ],
            regressor: RegressorTrainConfig::default(),
            synthesis: SynthTrainConfig::default(),
            svm: SvmConfig::default(),
            eval: EvalConfig::default(),
            out: PathBuf::from("aga-out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub k_shot: Option<usize>,
    pub lambda: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            CliError::Validation(format!("{}: config field `{field}`: {}", path.display(), e.inner()))
        })
    }

    /// `--seed` reseeds every random stream: data, γ, φ, the SVM passes and
    /// the trial seeds.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.synthetic.seed = seed;
            self.regressor.seed = seed;
            self.synthesis.seed = seed;
            self.svm.seed = seed;
            self.eval.base_seed = seed;
        }
        if let Some(t) = o.trials {
            self.eval.n_trials = t;
        }
        if let Some(k) = o.k_shot {
            self.eval.k_shot = k;
        }
        if let Some(l) = o.lambda {
            self.synthesis.lambda = l;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join("dataset.bin"))
    }

    pub fn grids(&self) -> aga_core::Result<Vec<IntervalGrid>> {
        self.grids.iter().map(GridConfig::build).collect()
    }

    pub fn attributes(&self) -> Vec<String> {
        self.grids.iter().map(|g| g.attribute.clone()).collect()
    }

    /// Checks every section; nothing runs unless this passes.
    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, e: aga_core::Error| CliError::Validation(format!("config field `{name}`: {e}"));
        self.synthetic.validate().map_err(|e| field("synthetic", e))?;
        self.regressor.validate().map_err(|e| field("regressor", e))?;
        self.synthesis.validate().map_err(|e| field("synthesis", e))?;
        self.svm.validate().map_err(|e| field("svm", e))?;
        if self.grids.is_empty() {
            return Err(CliError::Validation("config field `grids`: at least one grid is required".into()));
        }
        for (n, g) in self.grids.iter().enumerate() {
            g.build().map_err(|e| field(&format!("grids[{n}]"), e))?;
            if self.grids[..n].iter().any(|h| h.attribute == g.attribute) {
                return Err(CliError::Validation(format!(
                    "config field `grids[{n}].attribute`: duplicate attribute `{}`",
                    g.attribute
                )));
            }
        }
        if self.eval.k_shot < 1 {
            return Err(CliError::Validation("config field `eval.k_shot`: must be >= 1".into()));
        }
        if self.eval.n_trials < 1 {
            return Err(CliError::Validation("config field `eval.n_trials`: must be >= 1".into()));
        }
        if self.eval.max_synthesized == Some(0) {
            return Err(CliError::Validation("config field `eval.max_synthesized`: must be >= 1 when set".into()));
        }
        Ok(())
    }
}
