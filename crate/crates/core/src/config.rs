//! Pipeline configuration and its validation.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::gateway::CompletionParams;
use crate::kv::{self, KvError};

/// Chat-completion endpoint settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmSettings {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer credential.
    pub api_key_env: String,
    pub params: CompletionParams,
    pub max_concurrency: usize,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_total_wait_ms: u64,
    pub timeout_secs: u64,
    /// 0 disables the client-side limiter.
    pub requests_per_minute: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            endpoint: "https://api.openai.com/v1/chat/completions".to_owned(),
            api_key_env: "OPENAI_API_KEY".to_owned(),
            params: CompletionParams::default(),
            max_concurrency: 4,
            max_attempts: 3,
            initial_backoff_ms: 1_000,
            max_backoff_ms: 16_000,
            max_total_wait_ms: 60_000,
            timeout_secs: 60,
            requests_per_minute: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Accuracy strictly above this is "adequate".
    pub adequate_threshold: f64,
    /// Accuracy strictly below this is "struggling".
    pub struggling_threshold: f64,
    /// Cohorts up to this size use a median split for speed.
    pub speed_cohort_cutoff: usize,
    /// Fraction tagged fast (and slow) in cohorts above the cutoff.
    pub speed_extreme_fraction: f64,
    pub min_attempts_per_dimension: usize,
    pub knowledge_mapping: Option<PathBuf>,
    pub ability_mapping: Option<PathBuf>,
    /// Survey responses with a total at or below this are discarded as low.
    pub survey_low_total_threshold: u32,
    pub llm: LlmSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            adequate_threshold: 0.65,
            struggling_threshold: 0.55,
            speed_cohort_cutoff: 40,
            speed_extreme_fraction: 0.25,
            min_attempts_per_dimension: 3,
            knowledge_mapping: None,
            ability_mapping: None,
            survey_low_total_threshold: 5,
            llm: LlmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("struggling threshold {struggling} must be below adequate threshold {adequate}")]
    ThresholdOrder { struggling: f64, adequate: f64 },
    #[error("{name} = {value} is outside its allowed range {range}")]
    FractionRange { name: &'static str, value: f64, range: &'static str },
    #[error("speed_cohort_cutoff must be at least 1")]
    CohortCutoff,
    #[error("min_attempts_per_dimension must be at least 1")]
    MinAttempts,
    #[error("mapping file not found: {0}")]
    MissingMappingFile(PathBuf),
    #[error("invalid llm setting: {0}")]
    Llm(String),
}

/// Returns the config unchanged when every invariant holds, otherwise all
/// violations.
pub fn validate_config(cfg: PipelineConfig) -> Result<PipelineConfig, Vec<ConfigError>> {
    let mut errs = Vec::new();
    let unit = |name, value: f64, errs: &mut Vec<ConfigError>| {
        if !(0.0..=1.0).contains(&value) {
            errs.push(ConfigError::FractionRange { name, value, range: "[0, 1]" });
        }
    };
    unit("adequate_threshold", cfg.adequate_threshold, &mut errs);
    unit("struggling_threshold", cfg.struggling_threshold, &mut errs);
    if cfg.struggling_threshold.partial_cmp(&cfg.adequate_threshold) != Some(std::cmp::Ordering::Less) {
        errs.push(ConfigError::ThresholdOrder {
            struggling: cfg.struggling_threshold,
            adequate: cfg.adequate_threshold,
        });
    }
    let f = cfg.speed_extreme_fraction;
    if !(f > 0.0 && f <= 0.5) {
        errs.push(ConfigError::FractionRange { name: "speed_extreme_fraction", value: f, range: "(0, 0.5]" });
    }
    if cfg.speed_cohort_cutoff < 1 {
        errs.push(ConfigError::CohortCutoff);
    }
    if cfg.min_attempts_per_dimension < 1 {
        errs.push(ConfigError::MinAttempts);
    }
    for path in [&cfg.knowledge_mapping, &cfg.ability_mapping].into_iter().flatten() {
        if !path.is_file() {
            errs.push(ConfigError::MissingMappingFile(path.clone()));
        }
    }
    if let Err(e) = cfg.llm.params.validate() {
        errs.push(ConfigError::Llm(e));
    }
    if cfg.llm.max_concurrency == 0 {
        errs.push(ConfigError::Llm("max_concurrency must be at least 1".into()));
    }
    if cfg.llm.max_attempts == 0 {
        errs.push(ConfigError::Llm("max_attempts must be at least 1".into()));
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(errs)
    }
}

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigFileError> {
    v.parse().map_err(|_| ConfigFileError::BadValue { key: key.to_owned(), value: v.to_owned() })
}

impl PipelineConfig {
    /// Parses a flat key-value config; absent keys keep their defaults.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigFileError> {
        let mut cfg = PipelineConfig::default();
        for (k, v) in kv::parse(text)? {
            let key = k.as_str();
            match key {
                "adequate_threshold" => cfg.adequate_threshold = value(key, &v)?,
                "struggling_threshold" => cfg.struggling_threshold = value(key, &v)?,
                "speed_cohort_cutoff" => cfg.speed_cohort_cutoff = value(key, &v)?,
                "speed_extreme_fraction" => cfg.speed_extreme_fraction = value(key, &v)?,
                "min_attempts_per_dimension" => cfg.min_attempts_per_dimension = value(key, &v)?,
                "knowledge_mapping" => cfg.knowledge_mapping = Some(PathBuf::from(v)),
                "ability_mapping" => cfg.ability_mapping = Some(PathBuf::from(v)),
                "survey_low_total_threshold" => cfg.survey_low_total_threshold = value(key, &v)?,
                "llm.endpoint" => cfg.llm.endpoint = v,
                "llm.api_key_env" => cfg.llm.api_key_env = v,
                "llm.model" => cfg.llm.params.model = v,
                "llm.temperature" => cfg.llm.params.temperature = value(key, &v)?,
                "llm.max_tokens" => cfg.llm.params.max_tokens = value(key, &v)?,
                "llm.top_p" => cfg.llm.params.top_p = value(key, &v)?,
                "llm.frequency_penalty" => cfg.llm.params.frequency_penalty = value(key, &v)?,
                "llm.presence_penalty" => cfg.llm.params.presence_penalty = value(key, &v)?,
                "llm.max_concurrency" => cfg.llm.max_concurrency = value(key, &v)?,
                "llm.max_attempts" => cfg.llm.max_attempts = value(key, &v)?,
                "llm.initial_backoff_ms" => cfg.llm.initial_backoff_ms = value(key, &v)?,
                "llm.max_backoff_ms" => cfg.llm.max_backoff_ms = value(key, &v)?,
                "llm.max_total_wait_ms" => cfg.llm.max_total_wait_ms = value(key, &v)?,
                "llm.timeout_secs" => cfg.llm.timeout_secs = value(key, &v)?,
                "llm.requests_per_minute" => cfg.llm.requests_per_minute = value(key, &v)?,
                _ => return Err(ConfigFileError::UnknownKey(k)),
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigFileError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io { path: path.to_owned(), source })?;
        Self::from_kv_str(&text)
    }
}
