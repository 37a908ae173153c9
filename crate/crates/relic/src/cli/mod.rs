//! Run configuration and plumbing behind the command-line entry point.
//! Every flag has a config-file twin; a flag beats the file, the file beats
//! the defaults, and the merged result is validated once before any stage
//! touches data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auxselect::{AuxSelectConfig, AuxSelectError};
use crate::corpus::{load_bank, CorpusError, ExampleBank};
use crate::encoder::EncoderConfig;
use crate::eval::{EvalConfig, EvalError, StrategyTag};
use crate::inference::{InferError, InferenceConfig};
use crate::reward::{
    OracleModel, RemoteModel, RewardError, RewardModel, SyntheticOracleConfig,
};
use crate::trainer::{LossMode, TrainConfig, TrainError};

pub mod commands;
pub mod pipeline;
pub mod synth;

/// Environment fallback for the reward-model endpoint.
pub const MODEL_URL_ENV: &str = "RELIC_MODEL_URL";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {reason}")]
    Config { reason: String },
    #[error("data error: {detail}")]
    Data { detail: String },
    #[error("backend error: {detail}")]
    Backend { detail: String },
    #[error("internal error: {detail}")]
    Internal { detail: String },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn config(reason: impl Into<String>) -> Self {
        CliError::Config {
            reason: reason.into(),
        }
    }

    pub fn data(detail: impl Into<String>) -> Self {
        CliError::Data {
            detail: detail.into(),
        }
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        CliError::Internal {
            detail: detail.into(),
        }
    }

    /// Process exit status: 0 is success, 2 config, 3 data, 4 backend,
    /// 5 violated internal invariant. A stage wrapper keeps its cause's code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Data { .. } => 3,
            CliError::Backend { .. } => 4,
            CliError::Internal { .. } => 5,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<crate::encoder::EncoderError> for CliError {
    fn from(e: crate::encoder::EncoderError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<AuxSelectError> for CliError {
    fn from(e: AuxSelectError) -> Self {
        match e {
            AuxSelectError::InvalidGamma { .. } => CliError::config(e.to_string()),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig { .. } => CliError::config(e.to_string()),
            TrainError::NonFiniteLogit | TrainError::DimensionMismatch { .. } => {
                CliError::internal(e.to_string())
            }
            TrainError::Reward(inner) => inner.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<InferError> for CliError {
    fn from(e: InferError) -> Self {
        match e {
            InferError::InvalidConfig { .. } => CliError::config(e.to_string()),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<RewardError> for CliError {
    fn from(e: RewardError) -> Self {
        match e {
            RewardError::Backend { .. }
            | RewardError::Protocol { .. }
            | RewardError::NonFiniteScore => CliError::Backend {
                detail: e.to_string(),
            },
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Infer(inner) => inner.into(),
            EvalError::Reward(inner) => inner.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

/// Input and output locations of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPaths {
    /// Low-resource bank, named `{language}.bank.jsonl`.
    pub target_bank: PathBuf,
    /// Directory of candidate auxiliary banks, one `{language}.bank.jsonl`
    /// each.
    pub aux_dir: PathBuf,
    /// Preference pairs for evaluation.
    pub test_set: PathBuf,
    /// Where artifacts of this run land.
    pub run_dir: PathBuf,
}

/// Which reward model backs the run: a remote endpoint or the in-process
/// oracle. Exactly one must be chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub url: Option<String>,
    pub oracle: bool,
}

impl ModelConfig {
    pub fn build(&self, oracle_cfg: &SyntheticOracleConfig) -> Result<Box<dyn RewardModel>, CliError> {
        if self.oracle {
            return Ok(Box::new(OracleModel::new(oracle_cfg.clone())));
        }
        match &self.url {
            Some(url) => Ok(Box::new(RemoteModel::new(url))),
            None => Err(CliError::config(format!(
                "no reward model: set model.url (or {MODEL_URL_ENV}), model.oracle, \
                 --model-url, or --oracle"
            ))),
        }
    }
}

/// The merged configuration a run executes under. The run seed and the
/// parallelism bound flow into every stage; nested stage configs cannot
/// carry their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Concurrent reward-model requests.
    pub parallelism: usize,
    /// Persist reward scores under `run_dir` and reuse them across stages
    /// and reruns.
    pub cache: bool,
    /// Strategies the evaluate stage runs.
    pub strategies: Vec<StrategyTag>,
    pub paths: RunPaths,
    pub model: ModelConfig,
    pub encoder: EncoderConfig,
    pub auxselect: AuxSelectConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub oracle: SyntheticOracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            parallelism: 8,
            cache: true,
            strategies: StrategyTag::ALL.to_vec(),
            paths: RunPaths::default(),
            model: ModelConfig::default(),
            encoder: EncoderConfig::default(),
            auxselect: AuxSelectConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            oracle: SyntheticOracleConfig::default(),
        }
    }
}

impl RunConfig {
    /// Copies the run-level seed, parallelism, and encoder dimensions into
    /// the stage configs that embed their own copies.
    fn normalize(&mut self) {
        self.train.seed = self.seed;
        self.train.parallelism = self.parallelism;
        self.train.encoder = self.encoder;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.oracle && self.model.url.is_some() {
            return Err(CliError::config(
                "model.url and model.oracle are mutually exclusive; set exactly one",
            ));
        }
        if self.parallelism < 1 {
            return Err(CliError::config("parallelism must be at least 1"));
        }
        if self.strategies.is_empty() {
            return Err(CliError::config("strategies must not be empty"));
        }
        if !(0.0..=100.0).contains(&self.auxselect.gamma_percentile) {
            return Err(CliError::config(format!(
                "auxselect.gamma_percentile {} is outside [0, 100]",
                self.auxselect.gamma_percentile
            )));
        }
        self.train.validate()?;
        self.inference.validate()?;
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            inference: self.inference.clone(),
            seed: self.seed,
            parallelism: self.parallelism,
        }
    }

    /// The effective configuration as a TOML document, echoed into the run
    /// directory so a run is reproducible from its artifacts alone.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }
}

/// Command-line values that override the config file field for field. A
/// `None` leaves the file's (or default) value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub cache: Option<bool>,
    pub strategies: Option<Vec<StrategyTag>>,
    pub model_url: Option<String>,
    pub oracle: bool,
    pub target_bank: Option<PathBuf>,
    pub aux_dir: Option<PathBuf>,
    pub test_set: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub d_in: Option<usize>,
    pub d_out: Option<usize>,
    pub f: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub loss_mode: Option<LossMode>,
    pub max_pairs_per_sample: Option<usize>,
    pub c: Option<usize>,
    pub top_m_per_polarity: Option<usize>,
    pub token_budget: Option<usize>,
    pub beta: Option<f64>,
    pub good_marker: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if self.oracle && self.model_url.is_some() {
            return Err(CliError::config(
                "--oracle and --model-url are mutually exclusive",
            ));
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(parallelism) = self.parallelism {
            cfg.parallelism = parallelism;
        }
        if let Some(cache) = self.cache {
            cfg.cache = cache;
        }
        if let Some(strategies) = &self.strategies {
            cfg.strategies = strategies.clone();
        }
        if self.oracle {
            cfg.model.oracle = true;
            cfg.model.url = None;
        }
        if let Some(url) = &self.model_url {
            cfg.model.url = Some(url.clone());
            cfg.model.oracle = false;
        }
        let paths = [
            (&self.target_bank, &mut cfg.paths.target_bank),
            (&self.aux_dir, &mut cfg.paths.aux_dir),
            (&self.test_set, &mut cfg.paths.test_set),
            (&self.run_dir, &mut cfg.paths.run_dir),
        ];
        for (value, slot) in paths {
            if let Some(path) = value {
                *slot = path.clone();
            }
        }
        if let Some(gamma) = self.gamma {
            cfg.auxselect.gamma_percentile = gamma;
        }
        if let Some(d_in) = self.d_in {
            cfg.encoder.d_in = d_in;
        }
        if let Some(d_out) = self.d_out {
            cfg.encoder.d_out = d_out;
        }
        if let Some(f) = self.f {
            cfg.train.f = f;
        }
        if let Some(lr) = self.learning_rate {
            cfg.train.learning_rate = lr;
        }
        if let Some(batch) = self.batch_size {
            cfg.train.batch_size = batch;
        }
        if let Some(epochs) = self.epochs {
            cfg.train.epochs = epochs;
        }
        if let Some(mode) = self.loss_mode {
            cfg.train.loss_mode = mode;
        }
        if let Some(cap) = self.max_pairs_per_sample {
            cfg.train.max_pairs_per_sample = Some(cap);
        }
        if let Some(c) = self.c {
            cfg.inference.c = c;
        }
        if let Some(m) = self.top_m_per_polarity {
            cfg.inference.top_m_per_polarity = m;
        }
        if let Some(budget) = self.token_budget {
            cfg.inference.token_budget = budget;
        }
        if let Some(beta) = self.beta {
            cfg.oracle.beta = beta;
        }
        if let Some(marker) = &self.good_marker {
            cfg.oracle.good_marker = marker.clone();
        }
        Ok(())
    }
}

/// Builds the effective run configuration: config file under the overrides,
/// with the environment endpoint as a last resort when neither picked a
/// model, then normalized and validated.
pub fn load_run_config(
    config_path: Option<&Path>,
    overrides: &Overrides,
    env_model_url: Option<String>,
) -> Result<RunConfig, CliError> {
    let mut cfg = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::config(format!("cannot read config {}: {e}", path.display()))
            })?;
            toml::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg)?;
    if !cfg.model.oracle && cfg.model.url.is_none() {
        cfg.model.url = env_model_url;
    }
    cfg.normalize();
    cfg.validate()?;
    Ok(cfg)
}

/// The language a bank file is named for: `de.bank.jsonl` and `de.jsonl`
/// both name language `de`.
pub fn bank_language_from_path(path: &Path) -> Result<String, CliError> {
    let name = path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    let stem = name.strip_suffix(".jsonl").unwrap_or(name);
    let language = stem.strip_suffix(".bank").unwrap_or(stem);
    if language.is_empty() {
        return Err(CliError::config(format!(
            "cannot infer a language from {}; name bank files {{language}}.bank.jsonl",
            path.display()
        )));
    }
    Ok(language.to_string())
}

fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if path.as_os_str().is_empty() {
        return Err(CliError::config(format!("paths.{what} is not set")));
    }
    if !path.exists() {
        return Err(CliError::data(format!(
            "{what} {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

/// Loads the target bank, inferring its language from the file name.
pub fn load_target_bank(paths: &RunPaths) -> Result<ExampleBank, CliError> {
    require_exists(&paths.target_bank, "target_bank")?;
    let language = bank_language_from_path(&paths.target_bank)?;
    Ok(load_bank(&paths.target_bank, &language)?)
}

/// Loads every `*.jsonl` bank in the auxiliary directory, keyed by the
/// language its file name carries. The target's own language is skipped so
/// a corpus directory can hold all banks side by side.
pub fn load_aux_banks(
    paths: &RunPaths,
    target_language: &str,
) -> Result<BTreeMap<String, ExampleBank>, CliError> {
    require_exists(&paths.aux_dir, "aux_dir")?;
    let mut banks = BTreeMap::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&paths.aux_dir)
        .map_err(|e| CliError::data(format!("{}: {e}", paths.aux_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("jsonl"))
        .collect();
    entries.sort();
    for path in entries {
        let language = bank_language_from_path(&path)?;
        if language == target_language {
            continue;
        }
        let bank = load_bank(&path, &language)?;
        if banks.insert(language.clone(), bank).is_some() {
            return Err(CliError::data(format!(
                "auxiliary language {language:?} appears in more than one bank file"
            )));
        }
    }
    if banks.is_empty() {
        return Err(CliError::data(format!(
            "no auxiliary banks found in {}",
            paths.aux_dir.display()
        )));
    }
    Ok(banks)
}

/// Loads the preference test set.
pub fn load_test_set(paths: &RunPaths) -> Result<Vec<crate::corpus::PreferencePair>, CliError> {
    require_exists(&paths.test_set, "test_set")?;
    Ok(crate::corpus::load_preference_set(&paths.test_set)?)
}
