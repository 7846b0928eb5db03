//! Experiment configuration. Every key has a default, so a minimal TOML
//! document (even an empty one) yields a runnable experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ArrayConfig;
use crate::dataset::SynthConfig;
use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::tracking::{PrefilterConfig, WindowConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Generate with the synthetic vehicular model.
    Synth,
    /// Read an existing scene-records file.
    Ingest,
}

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub synth: SynthConfig,
    /// Scene-records file to read when `kind = "ingest"`.
    pub path: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Synth,
            synth: SynthConfig::default(),
            path: None,
        }
    }
}

/// Transmit/receive array sizes; codebooks match the element counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArraysConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub element_spacing: f64,
}

impl Default for ArraysConfig {
    fn default() -> Self {
        Self {
            n_tx: 16,
            n_rx: 1,
            element_spacing: 0.5,
        }
    }
}

impl ArraysConfig {
    pub fn tx(&self) -> Result<ArrayConfig> {
        ArrayConfig::new(self.n_tx, self.element_spacing, 0.0)
    }

    pub fn rx(&self) -> Result<ArrayConfig> {
        ArrayConfig::new(self.n_rx, self.element_spacing, 0.0)
    }

    pub fn num_beams(&self) -> usize {
        self.n_tx * self.n_rx
    }
}

/// LSTM sizing; input width and head are derived from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![128, 128],
            dropout_rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Every stage derives its own sub-seed from this.
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub test_fraction: f64,
    /// Predictions-per-measurement values to evaluate; 0 is full measurement.
    pub schedules: Vec<usize>,
    /// Top-K accuracy levels, ascending.
    pub top_k: Vec<usize>,
    pub scenario: ScenarioConfig,
    pub arrays: ArraysConfig,
    pub window: WindowConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub prefilter: PrefilterConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 7,
            out_dir: PathBuf::from("out"),
            test_fraction: 0.2,
            schedules: vec![0, 1, 2, 3],
            top_k: vec![1, 5, 10],
            scenario: ScenarioConfig::default(),
            arrays: ArraysConfig::default(),
            window: WindowConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            prefilter: PrefilterConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fraction_ok = self.test_fraction > 0.0 && self.test_fraction < 1.0;
        if !fraction_ok {
            return Err(Error::Validation(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        if self.schedules.is_empty() {
            return Err(Error::Validation("schedule list is empty".into()));
        }
        if self.schedules.iter().any(|&p| p > 3) {
            return Err(Error::Validation(
                "schedules must use 0..=3 predictions per measurement".into(),
            ));
        }
        if self.top_k.is_empty() || self.top_k.contains(&0) {
            return Err(Error::Validation("top_k must list positive K values".into()));
        }
        if self.top_k.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("top_k must be strictly ascending".into()));
        }
        if self.top_k.iter().any(|&k| k > self.arrays.num_beams()) {
            return Err(Error::Validation(format!(
                "top_k exceeds the {} available beams",
                self.arrays.num_beams()
            )));
        }
        if self.arrays.n_tx == 0 || self.arrays.n_rx == 0 {
            return Err(Error::Validation("arrays need at least one element".into()));
        }
        if self.prefilter.enabled && self.prefilter.subset_size > self.arrays.n_tx {
            return Err(Error::Validation(
                "prefilter subset exceeds transmit beam count".into(),
            ));
        }
        match self.scenario.kind {
            ScenarioKind::Synth => self.scenario.synth.validate()?,
            ScenarioKind::Ingest => {
                if self.scenario.path.is_none() {
                    return Err(Error::Validation(
                        "ingest scenario needs a path".into(),
                    ));
                }
            }
        }
        if self.model.hidden_dims.is_empty() || self.model.hidden_dims.contains(&0) {
            return Err(Error::Validation("model needs positive hidden sizes".into()));
        }
        if !(0.0..1.0).contains(&self.model.dropout_rate) {
            return Err(Error::Validation("dropout rate outside [0, 1)".into()));
        }
        self.window.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-stage sub-seed: FNV-1a over the stage name, folded with the master
/// seed. Documented so partial pipelines reproduce the full run.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ master
}
