//! Experiment configuration: typed defaults, a strict flat key-value file
//! format with dotted sections, and the canonical config hash used to key
//! sweep-cache cells.
//!
//! Unknown keys are fatal — a silent typo in a mechanism hyperparameter
//! would invalidate a benchmark. Every parse error carries its line number.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::parse_master_secret;
use crate::error::{FaflError, Result};
use crate::fairness::{MechanismConfig, MechanismKind};
use crate::model::TrainConfig;

/// Built-in development secret used when neither the config file nor
/// `FAFL_MASTER_SECRET` provides one. Simulations must run out of the box;
/// never reuse this outside the simulator.
pub const DEFAULT_DEV_SECRET: &str =
    "6661666c2d6465762d6b65792d30303030303030303030303030303030303030";

/// Where the training pool comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub classes: u32,
    pub features: usize,
    pub samples: usize,
    pub separation: f64,
    pub csv_path: Option<String>,
    pub label_column: String,
    pub group_column: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            classes: 3,
            features: 8,
            samples: 3000,
            separation: 3.0,
            csv_path: None,
            label_column: "label".into(),
            group_column: None,
        }
    }
}

/// Analytic network model: `latency = base + bytes / bandwidth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub base_latency_ms: f64,
    pub bandwidth_bytes_per_ms: f64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        Self { base_latency_ms: 5.0, bandwidth_bytes_per_ms: 1000.0 }
    }
}

/// Everything a run depends on. A fixed config (including seed) fully
/// determines the metric series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub clients: usize,
    pub rounds: usize,
    pub mechanism: MechanismKind,
    pub alpha: f64,
    pub max_labels: usize,
    pub adversaries: usize,
    pub encrypt: bool,
    pub eval_every: usize,
    pub seed: u64,
    /// 0 selects the softmax-linear model, otherwise the MLP hidden width.
    pub hidden_dim: usize,
    pub train: TrainConfig,
    pub mech: MechanismConfig,
    pub data: DataConfig,
    pub network: NetworkModel,
    /// 64 hex chars; falls back to `FAFL_MASTER_SECRET`, then the built-in
    /// development secret.
    pub master_secret: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            clients: 10,
            rounds: 200,
            mechanism: MechanismKind::FedAvg,
            alpha: 0.4,
            max_labels: 1,
            adversaries: 0,
            encrypt: true,
            eval_every: 1,
            seed: 1,
            hidden_dim: 0,
            train: TrainConfig { seed: 0, ..Default::default() },
            mech: MechanismConfig::default(),
            data: DataConfig::default(),
            network: NetworkModel::default(),
            master_secret: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients < 2 {
            return Err(FaflError::Config("clients must be at least 2".into()));
        }
        if self.rounds == 0 {
            return Err(FaflError::Config("rounds must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(FaflError::Config("alpha must lie in [0,1]".into()));
        }
        if self.max_labels == 0 {
            return Err(FaflError::Config("max_labels must be at least 1".into()));
        }
        if self.data.source == DataSource::Synthetic && self.max_labels > self.data.classes as usize
        {
            return Err(FaflError::Config(format!(
                "max_labels {} exceeds class count {}",
                self.max_labels, self.data.classes
            )));
        }
        if self.adversaries >= self.clients {
            return Err(FaflError::Config("adversaries must be fewer than clients".into()));
        }
        if self.eval_every == 0 {
            return Err(FaflError::Config("eval_every must be at least 1".into()));
        }
        self.train.validate()?;
        self.mech.validate(self.clients)?;
        if self.data.source == DataSource::Synthetic {
            if self.data.classes < 2 {
                return Err(FaflError::Config("data.classes must be at least 2".into()));
            }
            if self.data.features == 0 {
                return Err(FaflError::Config("data.features must be at least 1".into()));
            }
            if self.data.samples < self.data.classes as usize {
                return Err(FaflError::Config("data.samples must cover every class".into()));
            }
            if !self.data.separation.is_finite() || self.data.separation < 0.0 {
                return Err(FaflError::Config("data.separation must be non-negative".into()));
            }
        } else if self.data.csv_path.is_none() {
            return Err(FaflError::Config("data.csv_path required when data.source = csv".into()));
        }
        if self.network.bandwidth_bytes_per_ms <= 0.0 || self.network.bandwidth_bytes_per_ms.is_nan() {
            return Err(FaflError::Config("network.bandwidth must be positive".into()));
        }
        if self.network.base_latency_ms < 0.0 {
            return Err(FaflError::Config("network.base_latency_ms must be non-negative".into()));
        }
        if let Some(secret) = &self.master_secret {
            parse_master_secret(secret)?;
        }
        Ok(())
    }

    /// Resolve the AES master secret: explicit config value, then the
    /// `FAFL_MASTER_SECRET` environment variable, then the built-in
    /// development secret.
    pub fn resolve_master_secret(&self) -> Result<[u8; 32]> {
        if let Some(s) = &self.master_secret {
            return parse_master_secret(s);
        }
        if let Ok(s) = std::env::var("FAFL_MASTER_SECRET") {
            return parse_master_secret(&s);
        }
        parse_master_secret(DEFAULT_DEV_SECRET)
    }
}

/// 16-hex-char hash of the canonical JSON serialization; keys sweep-cache
/// cells and stamps metric series.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(&digest[..8])
}

/// Apply one `key = value` pair. `line` is used for error reporting only.
pub fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str, line: usize) -> Result<()> {
    fn bad(line: usize, key: &str, want: &str, value: &str) -> FaflError {
        FaflError::Config(format!("line {line}: {key} must be {want} (got '{value}')"))
    }
    let parse_usize = |v: &str, key: &str, want: &str| -> Result<usize> {
        v.parse::<usize>().map_err(|_| bad(line, key, want, v))
    };
    let parse_f64 = |v: &str, key: &str, want: &str| -> Result<f64> {
        v.parse::<f64>().map_err(|_| bad(line, key, want, v))
    };
    let parse_bool = |v: &str, key: &str| -> Result<bool> {
        match v.to_ascii_lowercase().as_str() {
            "on" | "true" | "1" | "yes" => Ok(true),
            "off" | "false" | "0" | "no" => Ok(false),
            _ => Err(bad(line, key, "on/off", v)),
        }
    };

    match key {
        "clients" => cfg.clients = parse_usize(value, key, "a non-negative integer")?,
        "rounds" => cfg.rounds = parse_usize(value, key, "a non-negative integer")?,
        "mechanism" => {
            cfg.mechanism = value
                .parse()
                .map_err(|e: FaflError| FaflError::Config(format!("line {line}: {e}")))?
        }
        "alpha" => cfg.alpha = parse_f64(value, key, "a float in [0,1]")?,
        "max_labels" => cfg.max_labels = parse_usize(value, key, "a positive integer")?,
        "adversaries" => cfg.adversaries = parse_usize(value, key, "a non-negative integer")?,
        "encryption" => cfg.encrypt = parse_bool(value, key)?,
        "eval_every" => cfg.eval_every = parse_usize(value, key, "a positive integer")?,
        "seed" => {
            cfg.seed = value
                .parse::<u64>()
                .map_err(|_| bad(line, key, "an unsigned integer", value))?
        }
        "hidden_dim" => cfg.hidden_dim = parse_usize(value, key, "a non-negative integer")?,
        "secret" => cfg.master_secret = Some(value.to_string()),
        "train.learning_rate" => {
            cfg.train.learning_rate = parse_f64(value, key, "a positive float")?
        }
        "train.decay" => cfg.train.decay = parse_f64(value, key, "a float in (0,1]")?,
        "train.batch_size" => {
            cfg.train.batch_size = parse_usize(value, key, "a positive integer")?
        }
        "train.local_epochs" => {
            cfg.train.local_epochs = parse_usize(value, key, "a positive integer")?
        }
        "mech.gamma" => cfg.mech.gamma = parse_f64(value, key, "a positive float")?,
        "mech.rho" => cfg.mech.rho = parse_f64(value, key, "a float in [0,1]")?,
        "mech.epsilon" => cfg.mech.epsilon = parse_f64(value, key, "a float in (0,1]")?,
        "mech.zeta" => cfg.mech.zeta = parse_f64(value, key, "a positive float")?,
        "mech.dual_step" => cfg.mech.dual_step = parse_f64(value, key, "a positive float")?,
        "mech.mixture_step" => {
            cfg.mech.mixture_step = parse_f64(value, key, "a positive float")?
        }
        "mech.beta" => cfg.mech.beta = parse_f64(value, key, "a float in (0,1]")?,
        "mech.select_count" => {
            cfg.mech.select_count = parse_usize(value, key, "a positive integer")?
        }
        "mech.budget" => cfg.mech.budget = parse_f64(value, key, "a non-negative float")?,
        "mech.cost_coeff" => cfg.mech.cost_coeff = parse_f64(value, key, "a positive float")?,
        "data.source" => {
            cfg.data.source = match value.to_ascii_lowercase().as_str() {
                "synthetic" => DataSource::Synthetic,
                "csv" => DataSource::Csv,
                _ => return Err(bad(line, key, "synthetic or csv", value)),
            }
        }
        "data.classes" => {
            cfg.data.classes = value
                .parse::<u32>()
                .map_err(|_| bad(line, key, "an integer >= 2", value))?
        }
        "data.features" => cfg.data.features = parse_usize(value, key, "a positive integer")?,
        "data.samples" => cfg.data.samples = parse_usize(value, key, "a positive integer")?,
        "data.separation" => {
            cfg.data.separation = parse_f64(value, key, "a non-negative float")?
        }
        "data.csv_path" => cfg.data.csv_path = Some(value.to_string()),
        "data.label_column" => cfg.data.label_column = value.to_string(),
        "data.group_column" => cfg.data.group_column = Some(value.to_string()),
        "network.base_latency_ms" => {
            cfg.network.base_latency_ms = parse_f64(value, key, "a non-negative float")?
        }
        "network.bandwidth" => {
            cfg.network.bandwidth_bytes_per_ms = parse_f64(value, key, "a positive float")?
        }
        other => {
            return Err(FaflError::Config(format!("line {line}: unknown key '{other}'")));
        }
    }
    Ok(())
}

/// Parse a config file on top of the benchmark defaults. An empty file
/// yields the full defaults. Strict mode: unknown keys are fatal.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(FaflError::Config(format!(
                "line {line_no}: expected 'key = value', got '{line}'"
            )));
        };
        apply_key(&mut cfg, key.trim(), value.trim(), line_no)?;
    }
    Ok(cfg)
}

pub fn parse_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        FaflError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config_str(&text)
}

/// Emit a config as the flat key-value format; `parse_config_str` of the
/// result reproduces the config exactly.
pub fn config_to_text(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("clients", cfg.clients.to_string());
    kv("rounds", cfg.rounds.to_string());
    kv("mechanism", cfg.mechanism.name().to_string());
    kv("alpha", format!("{}", cfg.alpha));
    kv("max_labels", cfg.max_labels.to_string());
    kv("adversaries", cfg.adversaries.to_string());
    kv("encryption", if cfg.encrypt { "on" } else { "off" }.to_string());
    kv("eval_every", cfg.eval_every.to_string());
    kv("seed", cfg.seed.to_string());
    kv("hidden_dim", cfg.hidden_dim.to_string());
    if let Some(s) = &cfg.master_secret {
        kv("secret", s.clone());
    }
    kv("train.learning_rate", format!("{}", cfg.train.learning_rate));
    kv("train.decay", format!("{}", cfg.train.decay));
    kv("train.batch_size", cfg.train.batch_size.to_string());
    kv("train.local_epochs", cfg.train.local_epochs.to_string());
    kv("mech.gamma", format!("{}", cfg.mech.gamma));
    kv("mech.rho", format!("{}", cfg.mech.rho));
    kv("mech.epsilon", format!("{}", cfg.mech.epsilon));
    kv("mech.zeta", format!("{}", cfg.mech.zeta));
    kv("mech.dual_step", format!("{}", cfg.mech.dual_step));
    kv("mech.mixture_step", format!("{}", cfg.mech.mixture_step));
    kv("mech.beta", format!("{}", cfg.mech.beta));
    kv("mech.select_count", cfg.mech.select_count.to_string());
    kv("mech.budget", format!("{}", cfg.mech.budget));
    kv("mech.cost_coeff", format!("{}", cfg.mech.cost_coeff));
    let source = match cfg.data.source {
        DataSource::Synthetic => "synthetic",
        DataSource::Csv => "csv",
    };
    kv("data.source", source.to_string());
    kv("data.classes", cfg.data.classes.to_string());
    kv("data.features", cfg.data.features.to_string());
    kv("data.samples", cfg.data.samples.to_string());
    kv("data.separation", format!("{}", cfg.data.separation));
    if let Some(p) = &cfg.data.csv_path {
        kv("data.csv_path", p.clone());
    }
    kv("data.label_column", cfg.data.label_column.clone());
    if let Some(g) = &cfg.data.group_column {
        kv("data.group_column", g.clone());
    }
    kv("network.base_latency_ms", format!("{}", cfg.network.base_latency_ms));
    kv("network.bandwidth", format!("{}", cfg.network.bandwidth_bytes_per_ms));
    out
}
