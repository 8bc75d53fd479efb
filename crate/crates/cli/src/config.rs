//! Flat key/value campaign configuration.
//!
//! Every key lives at the top level of one JSON object. Values are merged as
//! defaults, then the file, then command-line overrides; each stage may only
//! use keys that exist in the defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fblsec_core::pipeline::SystemConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    RateVsBlocklength,
    SecrecyLevelVsRound,
    LearningCurves,
    PrivacyUtilitySweep,
    CodecValidation,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::RateVsBlocklength,
        Scenario::SecrecyLevelVsRound,
        Scenario::LearningCurves,
        Scenario::PrivacyUtilitySweep,
        Scenario::CodecValidation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::RateVsBlocklength => "rate_vs_blocklength",
            Scenario::SecrecyLevelVsRound => "secrecy_level_vs_round",
            Scenario::LearningCurves => "learning_curves",
            Scenario::PrivacyUtilitySweep => "privacy_utility_sweep",
            Scenario::CodecValidation => "codec_validation",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Scenario::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| ConfigError::BadValue {
            key: "scenario".into(),
            reason: format!("unknown scenario {s:?}; expected one of {}", Scenario::ALL.map(Scenario::name).join(", ")),
        })
    }
}

/// Campaign-level settings that are not part of the physical system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSettings {
    pub scenario: Scenario,
    pub seed: u64,
    /// Fading realizations per Monte Carlo point.
    pub realizations: usize,
    /// `"synthetic"` or a directory holding the MNIST IDX files.
    pub dataset: String,
    pub output_dir: PathBuf,
    /// Blocks per blocklength in `codec_validation`.
    pub blocks: u64,
    /// Error budget used by `codec_validation`.
    pub validation_tau: f64,
    pub validation_n_t: Vec<usize>,
    /// Largest blocklength in `rate_vs_blocklength`.
    pub n_t_max: usize,
    pub sweep_sigma2: Vec<f64>,
    pub sweep_utility: Vec<f64>,
    pub sweep_eps: Vec<f64>,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        CampaignSettings {
            scenario: Scenario::LearningCurves,
            seed: 1,
            realizations: 1000,
            dataset: "synthetic".into(),
            output_dir: PathBuf::from("out"),
            blocks: 100_000,
            validation_tau: 1e-3,
            validation_n_t: vec![5, 10, 20],
            n_t_max: 40,
            sweep_sigma2: vec![0.1, 0.25, 0.5, 1.0],
            sweep_utility: vec![5.0, 10.0],
            sweep_eps: vec![0.1, 0.5],
        }
    }
}

/// Everything a campaign run needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CampaignConfig {
    pub system: SystemConfig,
    pub campaign: CampaignSettings,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("unknown key {key:?}; valid keys: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<String> },
    #[error("invalid value for {key:?}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("{key} out of range: {reason}")]
    OutOfRange { key: String, reason: String },
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("config structs serialize to objects"),
    }
}

fn defaults() -> (Map<String, Value>, Map<String, Value>) {
    let system = object(serde_json::to_value(SystemConfig::default()).expect("serializable"));
    let campaign = object(serde_json::to_value(CampaignSettings::default()).expect("serializable"));
    (system, campaign)
}

/// Every accepted key, sorted.
pub fn valid_keys() -> Vec<String> {
    let (s, c) = defaults();
    let mut keys: Vec<String> = s.keys().chain(c.keys()).cloned().collect();
    keys.sort();
    keys
}

/// Parses the text of a config file. Blank text means "no overrides".
pub fn parse_file_text(text: &str) -> Result<Map<String, Value>, ConfigError> {
    if text.trim().is_empty() {
        return Ok(Map::new());
    }
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ConfigError::Syntax("top level must be a JSON object".into())),
        Err(e) => Err(ConfigError::Syntax(e.to_string())),
    }
}

pub fn read_file(path: &Path) -> Result<Map<String, Value>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    parse_file_text(&text)
}

/// Parses a `key=value` override. The value is read as JSON when possible and
/// as a bare string otherwise.
pub fn parse_assignment(s: &str) -> Result<(String, Value), ConfigError> {
    let (k, v) =
        s.split_once('=').ok_or_else(|| ConfigError::Syntax(format!("override {s:?} is not of the form key=value")))?;
    let v = v.trim();
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

impl CampaignConfig {
    /// Applies `layers` in order over the defaults, then validates.
    pub fn from_layers(layers: &[Map<String, Value>]) -> Result<Self, ConfigError> {
        let (mut system, mut campaign) = defaults();
        for layer in layers {
            for (key, value) in layer {
                let is_system = system.contains_key(key);
                if !is_system && !campaign.contains_key(key) {
                    return Err(ConfigError::UnknownKey { key: key.clone(), valid: valid_keys() });
                }
                let target = if is_system { &mut system } else { &mut campaign };
                // Type-check this key alone so the diagnostic can name it.
                let mut probe = target.clone();
                probe.insert(key.clone(), value.clone());
                let checked = if is_system {
                    serde_json::from_value::<SystemConfig>(Value::Object(probe)).map(drop)
                } else {
                    serde_json::from_value::<CampaignSettings>(Value::Object(probe)).map(drop)
                };
                checked.map_err(|e| ConfigError::BadValue { key: key.clone(), reason: e.to_string() })?;
                target.insert(key.clone(), value.clone());
            }
        }
        let cfg = CampaignConfig {
            system: serde_json::from_value(Value::Object(system)).map_err(|e| ConfigError::Syntax(e.to_string()))?,
            campaign: serde_json::from_value(Value::Object(campaign))
                .map_err(|e| ConfigError::Syntax(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The merged configuration as one flat object, keys sorted.
    pub fn to_flat(&self) -> Map<String, Value> {
        let mut all: Vec<(String, Value)> = object(serde_json::to_value(&self.system).expect("serializable"))
            .into_iter()
            .chain(object(serde_json::to_value(&self.campaign).expect("serializable")))
            .collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all.into_iter().collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system.validate().map_err(|e| {
            let reason = match &e {
                fblsec_core::Error::Domain(m) => m.clone(),
                other => other.to_string(),
            };
            let first = reason.split_whitespace().next().unwrap_or_default();
            let key = if valid_keys().iter().any(|k| k == first) { first.to_string() } else { "system".into() };
            ConfigError::OutOfRange { key, reason }
        })?;
        let c = &self.campaign;
        let range = |key: &str, reason: String| Err(ConfigError::OutOfRange { key: key.into(), reason });
        if c.realizations < 1 {
            return range("realizations", format!("must be at least 1, got {}", c.realizations));
        }
        if c.blocks < 1 {
            return range("blocks", format!("must be at least 1, got {}", c.blocks));
        }
        if !(c.validation_tau > 0.0 && c.validation_tau < 1.0) {
            return range("validation_tau", format!("must lie in (0, 1), got {}", c.validation_tau));
        }
        if c.validation_n_t.is_empty() || c.validation_n_t.iter().any(|&n| n < 2) {
            return range("validation_n_t", format!("needs blocklengths of at least 2, got {:?}", c.validation_n_t));
        }
        if c.n_t_max < 2 {
            return range("n_t_max", format!("must be at least 2, got {}", c.n_t_max));
        }
        if c.sweep_sigma2.is_empty() || c.sweep_sigma2.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return range("sweep_sigma2", format!("needs nonnegative variances, got {:?}", c.sweep_sigma2));
        }
        for (key, v) in [("sweep_utility", &c.sweep_utility), ("sweep_eps", &c.sweep_eps)] {
            if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return range(key, format!("needs positive values, got {v:?}"));
            }
        }
        Ok(())
    }
}
