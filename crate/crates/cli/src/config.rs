//! TOML experiment configuration.
//!
//! Top-level keys hold the federation settings; `[strategy]`, `[model]`,
//! `[data]` and `[partition]` sections hold the rest. Unknown keys are
//! rejected and every error names the offending key.

use std::path::{Path, PathBuf};

use pmixfed_core::orchestrator::{DataSource, ExperimentConfig};
use pmixfed_core::strategy::{ScheduleMode, ScheduleSpec, StrategyKind, StrategySpec};
use pmixfed_core::{ModelKind, Optimizer, PartitionScheme};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn d_participation() -> f64 {
    1.0
}
fn d_rounds() -> usize {
    50
}
fn d_epochs() -> usize {
    4
}
fn d_batch() -> usize {
    32
}
fn d_lr() -> f64 {
    0.001
}
fn d_offset() -> f64 {
    2.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerName {
    #[default]
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Number of clients; required.
    #[serde(rename = "N")]
    pub n: usize,
    /// Participation rate.
    #[serde(rename = "C", default = "d_participation")]
    pub c: f64,
    /// Communication rounds.
    #[serde(rename = "T", default = "d_rounds")]
    pub t: usize,
    /// Local epochs.
    #[serde(default = "d_epochs")]
    pub r: usize,
    /// Fixed local steps, replacing `r` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_lr")]
    pub lr_local: f64,
    #[serde(default = "d_lr")]
    pub lr_global: f64,
    /// Offset exponent of the adaptive mix factor.
    #[serde(default = "d_offset")]
    pub b: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerName,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub partition: PartitionSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    #[serde(default = "d_kind")]
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_layer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personal_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ScheduleMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_alpha: Option<f64>,
}

fn d_kind() -> StrategyKind {
    StrategyKind::Fedavg
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            kind: d_kind(),
            split_layer: None,
            personal_epochs: None,
            mode: None,
            fixed_mu: None,
            beta_alpha: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "d_model")]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
}

fn d_model() -> ModelKind {
    ModelKind::Logistic
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { kind: d_model(), hidden_dim: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceName {
    #[default]
    Synthetic,
    Idx,
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub source: SourceName,
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub noise_sd: f64,
    pub test_per_class: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    pub layers: usize,
    pub spread: f64,
    pub sigma: f64,
    pub samples: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: SourceName::Synthetic,
            num_classes: 10,
            dim: 20,
            per_class: 200,
            separation: 5.0,
            noise_sd: 1.0,
            test_per_class: 50,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            limit: None,
            layers: 2,
            spread: 3.0,
            sigma: 0.0,
            samples: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    #[default]
    ShardCap,
    Dirichlet,
    Iid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSection {
    pub scheme: SchemeName,
    pub classes_per_client: usize,
    pub alpha: f64,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self { scheme: SchemeName::ShardCap, classes_per_client: 2, alpha: 0.5 }
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config { key: key.into(), message: msg.to_string() }
}

impl ConfigFile {
    /// Parses TOML text. Errors carry the dotted path of the bad key.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid("<document>", e.message()))?;
        let parsed: Self = serde_path_to_error::deserialize(toml::Value::Table(value)).map_err(|e| {
            let key = e.path().to_string();
            invalid(if key == "." { "<root>" } else { &key }, e.into_inner())
        })?;
        parsed.check()?;
        Ok(parsed)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| invalid("<document>", e))
    }

    /// Field-level invariants, reported under the config key name.
    fn check(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(invalid("N", "must be >= 1"));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(invalid("C", format!("must be in (0, 1], got {}", self.c)));
        }
        if self.t == 0 {
            return Err(invalid("T", "must be >= 1"));
        }
        if self.batch == 0 {
            return Err(invalid("batch", "must be >= 1"));
        }
        if !(self.lr_local > 0.0) || !self.lr_local.is_finite() {
            return Err(invalid("lr_local", format!("must be > 0, got {}", self.lr_local)));
        }
        if !(self.lr_global >= 0.0) || !self.lr_global.is_finite() {
            return Err(invalid("lr_global", format!("must be >= 0, got {}", self.lr_global)));
        }
        if !self.b.is_finite() {
            return Err(invalid("b", "must be finite"));
        }
        Ok(())
    }

    fn strategy_spec(&self) -> Result<StrategySpec, CliError> {
        let s = &self.strategy;
        let schedule = match s.kind {
            StrategyKind::Pmixfed | StrategyKind::PmixfedDynamic => {
                let default_mode = if s.kind == StrategyKind::PmixfedDynamic {
                    ScheduleMode::DynamicFixed
                } else {
                    ScheduleMode::Adaptive
                };
                let spec = ScheduleSpec {
                    mode: s.mode.unwrap_or(default_mode),
                    fixed_mu: s.fixed_mu,
                    beta_alpha: s.beta_alpha,
                    offset: self.b,
                };
                spec.validate().map_err(|e| invalid("strategy", e))?;
                Some(spec)
            }
            _ => None,
        };
        Ok(StrategySpec {
            kind: s.kind,
            split_layer: s.split_layer,
            personal_epochs: s.personal_epochs,
            schedule,
        })
    }

    fn data_source(&self) -> Result<DataSource, CliError> {
        let d = &self.data;
        Ok(match d.source {
            SourceName::Synthetic => DataSource::Synthetic {
                num_classes: d.num_classes,
                dim: d.dim,
                per_class: d.per_class,
                separation: d.separation,
                noise_sd: d.noise_sd,
                test_per_class: d.test_per_class,
            },
            SourceName::Idx => {
                let need = |p: &Option<PathBuf>, key: &str| {
                    p.clone().ok_or_else(|| invalid(&format!("data.{key}"), "required for idx data"))
                };
                DataSource::Idx {
                    train_images: need(&d.train_images, "train_images")?,
                    train_labels: need(&d.train_labels, "train_labels")?,
                    test_images: need(&d.test_images, "test_images")?,
                    test_labels: need(&d.test_labels, "test_labels")?,
                    limit: d.limit,
                }
            }
            SourceName::Quadratic => DataSource::Quadratic {
                dim: d.dim,
                layers: d.layers,
                spread: d.spread,
                sigma: d.sigma,
                samples: d.samples,
            },
        })
    }

    fn partition_scheme(&self) -> PartitionScheme {
        let p = &self.partition;
        match p.scheme {
            SchemeName::ShardCap => PartitionScheme::ShardCap { classes_per_client: p.classes_per_client },
            SchemeName::Dirichlet => PartitionScheme::Dirichlet { alpha: p.alpha },
            SchemeName::Iid => PartitionScheme::Iid,
        }
    }

    pub fn to_experiment(&self) -> Result<ExperimentConfig, CliError> {
        let cfg = ExperimentConfig {
            num_clients: self.n,
            participation: self.c,
            rounds: self.t,
            local_epochs: self.r,
            local_steps: self.tau,
            batch_size: self.batch,
            lr_local: self.lr_local,
            lr_global: self.lr_global,
            optimizer: match self.optimizer {
                OptimizerName::Sgd => Optimizer::Sgd,
                OptimizerName::Adam => Optimizer::adam(),
            },
            strategy: self.strategy_spec()?,
            model: self.model.kind,
            hidden_dim: self.model.hidden_dim,
            data: self.data_source()?,
            partition: self.partition_scheme(),
            seed: self.seed,
        };
        cfg.validate().map_err(|e| invalid("<config>", e))?;
        Ok(cfg)
    }
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    ConfigFile::from_toml(&text)
}

/// Reads and validates an experiment configuration.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    load_config_file(path)?.to_experiment()
}
