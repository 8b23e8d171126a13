use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use tracefault::mutation::SeedingConfig;
use tracefault::stats::{DEFAULT_ALPHA, DEFAULT_BETA};
use tracefault::{IndicatorConfig, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub traces_dir: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub program: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// Settings shared by all subcommands, read from `--config` and then
/// overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Training runs expected per program under diagnosis.
    pub runs_per_program: usize,
    pub indicators: IndicatorConfig,
    pub classifier: TrainConfig,
    pub train_fraction: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seeding: SeedingConfig,
    pub seed: u64,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            runs_per_program: 10,
            indicators: IndicatorConfig::default(),
            classifier: TrainConfig::default(),
            train_fraction: 0.7,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            seeding: SeedingConfig::default(),
            seed: 0,
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.runs_per_program < 1 {
            return Err("runs_per_program must be >= 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err("train_fraction must be in (0, 1)".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err("alpha must be in (0, 1)".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err("beta must be finite and >= 0".into());
        }
        if self.seeding.max_types < 1 || self.seeding.max_types > 5 {
            return Err("seeding.max_types must be in 1..=5".into());
        }
        if self.seeding.repetitions < 2 {
            return Err("seeding.repetitions must be >= 2".into());
        }
        self.indicators.validate().map_err(|e| e.to_string())?;
        self.classifier.tree.validate().map_err(|e| e.to_string())?;
        if self.classifier.k < 1 || self.classifier.forest.n_trees < 1 {
            return Err("classifier.k and classifier.forest.n_trees must be >= 1".into());
        }
        let inputs = [
            ("paths.traces_dir", &self.paths.traces_dir),
            ("paths.bundle", &self.paths.bundle),
            ("paths.program", &self.paths.program),
        ];
        for (name, p) in inputs {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(format!("{name} {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }
}
