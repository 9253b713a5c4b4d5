use std::collections::BTreeSet;

use crate::corpus::default_silence_labels;
use crate::dsp::MfccConfig;
use crate::error::{Error, Result};
use crate::eval::MedianMode;
use crate::net::{Activation, ModelConfig, TrainConfig};
use crate::phonfeat::SessionNormMode;

/// Which input representation feeds the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    /// MFCCs with deltas and delta-deltas.
    Baseline,
    /// Session-normalized phonemizer posteriors.
    W2v,
    /// One-hot phones from the automatic alignment.
    OnehotAuto,
    /// One-hot phones from the expert alignment.
    OnehotExpert,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Baseline,
        ExperimentKind::W2v,
        ExperimentKind::OnehotAuto,
        ExperimentKind::OnehotExpert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Baseline => "baseline",
            ExperimentKind::W2v => "w2v",
            ExperimentKind::OnehotAuto => "onehot-auto",
            ExperimentKind::OnehotExpert => "onehot-expert",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}` (baseline|w2v|onehot-auto|onehot-expert)"))
    }
}

/// Every tunable of a run. Text form is flat `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dense_units: usize,
    pub lstm_units: usize,
    pub activation: Activation,
    pub model_seed: u64,
    pub train: TrainConfig,
    pub split_seed: u64,
    pub mfcc: MfccConfig,
    pub silence_labels: BTreeSet<String>,
    pub session_norm: SessionNormMode,
    pub median_mode: MedianMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset("paper").expect("built-in preset")
    }
}

pub const PRESETS: [&str; 2] = ["desk", "paper"];

impl RunConfig {
    /// `paper`: 300-unit layers, up to 300 epochs. `desk`: 64 units, 30
    /// epochs.
    pub fn preset(name: &str) -> Result<Self> {
        let (units, epochs) = match name {
            "paper" => (300, 300),
            "desk" => (64, 30),
            _ => return Err(Error::Config(format!("unknown preset `{name}` (desk|paper)"))),
        };
        Ok(Self {
            dense_units: units,
            lstm_units: units,
            activation: Activation::Relu,
            model_seed: 0,
            train: TrainConfig {
                max_epochs: epochs,
                ..TrainConfig::default()
            },
            split_seed: 0,
            mfcc: MfccConfig::default(),
            silence_labels: default_silence_labels(),
            session_norm: SessionNormMode::Scalar,
            median_mode: MedianMode::Coordinate,
        })
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            dense_units: self.dense_units,
            lstm_units: self.lstm_units,
            output_dim: crate::corpus::CONTOUR_DIM,
            dense_activation: self.activation,
            seed: self.model_seed,
        }
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
        }
        let m = &mut self.mfcc;
        match key {
            "model.dense_units" => self.dense_units = num(key, value)?,
            "model.lstm_units" => self.lstm_units = num(key, value)?,
            "model.activation" => self.activation = value.parse().map_err(Error::Config)?,
            "model.seed" => self.model_seed = num(key, value)?,
            "train.max_epochs" => self.train.max_epochs = num(key, value)?,
            "train.batch_sequences" => self.train.batch_sequences = num(key, value)?,
            "train.patience" => self.train.patience = num(key, value)?,
            "train.lr" => self.train.lr = num(key, value)?,
            "train.seed" => self.train.seed = num(key, value)?,
            "train.split_seed" => self.split_seed = num(key, value)?,
            "mfcc.window_s" => m.window_s = num(key, value)?,
            "mfcc.hop_s" => m.hop_s = num(key, value)?,
            "mfcc.fft_size" => m.fft_size = num(key, value)?,
            "mfcc.n_mel_filters" => m.n_mel_filters = num(key, value)?,
            "mfcc.n_ceps" => m.n_ceps = num(key, value)?,
            "mfcc.preemphasis" => m.preemphasis = num(key, value)?,
            "mfcc.mel_fmin_hz" => m.mel_fmin_hz = num(key, value)?,
            "mfcc.mel_fmax_hz" => m.mel_fmax_hz = num(key, value)?,
            "mfcc.log_floor" => m.log_floor = num(key, value)?,
            "features.silence_labels" => {
                self.silence_labels = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "features.session_norm" => self.session_norm = value.parse().map_err(Error::Config)?,
            "eval.median_mode" => self.median_mode = value.parse().map_err(Error::Config)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("config", i + 1, "expected `key = value`"))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::parse("config", i + 1, msg),
                other => other,
            })?;
        }
        Ok(())
    }

    /// All keys with their values, sorted by key.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let m = &self.mfcc;
        let silence: Vec<&str> = self.silence_labels.iter().map(String::as_str).collect();
        vec![
            ("eval.median_mode", self.median_mode.name().to_string()),
            ("features.session_norm", self.session_norm.name().to_string()),
            ("features.silence_labels", silence.join(",")),
            ("mfcc.fft_size", m.fft_size.to_string()),
            ("mfcc.hop_s", m.hop_s.to_string()),
            ("mfcc.log_floor", m.log_floor.to_string()),
            ("mfcc.mel_fmax_hz", m.mel_fmax_hz.to_string()),
            ("mfcc.mel_fmin_hz", m.mel_fmin_hz.to_string()),
            ("mfcc.n_ceps", m.n_ceps.to_string()),
            ("mfcc.n_mel_filters", m.n_mel_filters.to_string()),
            ("mfcc.preemphasis", m.preemphasis.to_string()),
            ("mfcc.window_s", m.window_s.to_string()),
            ("model.activation", self.activation.name().to_string()),
            ("model.dense_units", self.dense_units.to_string()),
            ("model.lstm_units", self.lstm_units.to_string()),
            ("model.seed", self.model_seed.to_string()),
            ("train.batch_sequences", self.train.batch_sequences.to_string()),
            ("train.lr", self.train.lr.to_string()),
            ("train.max_epochs", self.train.max_epochs.to_string()),
            ("train.patience", self.train.patience.to_string()),
            ("train.seed", self.train.seed.to_string()),
            ("train.split_seed", self.split_seed.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.mfcc.validate()?;
        self.model_config(1).validate()?;
        if self.silence_labels.iter().any(|l| l.contains(char::is_whitespace)) {
            return Err(Error::Config("silence labels cannot contain whitespace".into()));
        }
        Ok(())
    }
}
