//! Run configuration file. Command-line flags override every field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use attrlabel_core::allocation::{FilterConfig, Fraction};
use attrlabel_service::GroupParams;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    /// Generic JSON source driven by an adapter config.
    Json,
    /// KITTI object label files.
    Kitti,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub format: Option<SourceFormat>,
    /// Adapter config (JSON sources) or KITTI options file.
    pub config: Option<PathBuf>,
    /// Source directory with the raw labels.
    pub input: Option<PathBuf>,
    /// KITTI image directory, defaults to `input/../image_2`.
    pub images: Option<PathBuf>,
    pub goal: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Where ingested `<dataset>.jsonl` files live.
    pub source_root: Option<PathBuf>,
    /// Dataset directories served by the annotation service.
    pub data_root: Option<PathBuf>,
    pub export_root: Option<PathBuf>,
    pub datasets: BTreeMap<String, DatasetConfig>,
    pub annotators: Option<usize>,
    pub annotator_ids: Option<Vec<String>>,
    pub fraction: Option<String>,
    pub seed: Option<u64>,
    pub thresholds: Option<FilterConfig>,
    pub port: Option<u16>,
    pub group_params: Option<GroupParams>,
    pub sync_journal: Option<bool>,
    pub soft: Option<Vec<String>>,
    pub soft_weight: Option<f64>,
    pub underrepresented_percent: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(f) = &self.fraction {
            parse_fraction(f)?;
        }
        if let Some(n) = self.annotators {
            if n < 2 {
                return Err(CliError::Config(format!("annotators must be at least 2, got {n}")));
            }
        }
        if let (Some(n), Some(ids)) = (self.annotators, &self.annotator_ids) {
            if n != ids.len() {
                return Err(CliError::Config(format!("annotators = {n} but {} annotator_ids given", ids.len())));
            }
        }
        if let Some(t) = &self.thresholds {
            t.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(p) = self.underrepresented_percent {
            if !(0.0..=100.0).contains(&p) {
                return Err(CliError::Config(format!("underrepresented_percent must be within 0..=100, got {p}")));
            }
        }
        if let Some(g) = &self.group_params {
            if !(g.alpha >= 0.0 && g.beta >= 0.0 && g.gamma >= 1.0) {
                return Err(CliError::Config("group_params need alpha, beta >= 0 and gamma >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn dataset(&self, id: &str) -> DatasetConfig {
        self.datasets.get(id).cloned().unwrap_or_default()
    }
}

pub fn parse_fraction(s: &str) -> Result<Fraction, CliError> {
    let f: Fraction = s.parse().map_err(CliError::Config)?;
    let r = f.ratio();
    if *r.numer() == 0 || r.numer() >= r.denom() {
        return Err(CliError::Config(format!("fraction must lie strictly between 0 and 1, got {s}")));
    }
    Ok(f)
}

pub fn required<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing {what} (flag or run config)")))
}
