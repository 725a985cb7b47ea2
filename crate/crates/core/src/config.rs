//! Search hyperparameters, their validation, and per-generation fan-out.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A population or arity size that may be the unbounded sentinel `inf`.
///
/// `inf` is realized as `max_programs` during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Finite(usize),
    Inf,
}

impl Arity {
    /// Concrete value, with `Inf` mapped to `max_programs`.
    pub fn resolve(self, max_programs: usize) -> usize {
        match self {
            Arity::Finite(n) => n,
            Arity::Inf => max_programs,
        }
    }

    pub fn is_inf(self) -> bool {
        matches!(self, Arity::Inf)
    }
}

impl From<usize> for Arity {
    fn from(n: usize) -> Self {
        Arity::Finite(n)
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Finite(n) => write!(f, "{n}"),
            Arity::Inf => f.write_str("inf"),
        }
    }
}

impl FromStr for Arity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Arity::Inf);
        }
        s.parse::<usize>()
            .map(Arity::Finite)
            .map_err(|_| format!("expected a positive integer or `inf`, got `{s}`"))
    }
}

impl Serialize for Arity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Arity::Finite(n) => serializer.serialize_u64(*n as u64),
            Arity::Inf => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Arity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ArityVisitor;

        impl Visitor<'_> for ArityVisitor {
            type Value = Arity;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or the string \"inf\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Arity, E> {
                Ok(Arity::Finite(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Arity, E> {
                usize::try_from(v)
                    .map(Arity::Finite)
                    .map_err(|_| E::custom(format!("arity must be non-negative, got {v}")))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Arity, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ArityVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Tournament,
    Lexicase,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Tournament => "tournament",
            Selection::Lexicase => "lexicase",
        })
    }
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tournament" => Ok(Selection::Tournament),
            "lexicase" => Ok(Selection::Lexicase),
            other => Err(format!("unknown selection `{other}`")),
        }
    }
}

/// Which instruction generator drives repairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstructMode {
    /// Fixed template filled with the first failing case.
    Static,
    /// Bug summaries sampled from the explain model.
    #[default]
    Llm,
}

impl fmt::Display for InstructMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstructMode::Static => "static",
            InstructMode::Llm => "llm",
        })
    }
}

impl FromStr for InstructMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(InstructMode::Static),
            "llm" => Ok(InstructMode::Llm),
            other => Err(format!("unknown instruct mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    /// Seconds.
    pub compile_timeout: f64,
    /// Seconds, per test case.
    pub run_timeout: f64,
    pub max_output_lines: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            compile_timeout: 30.0,
            run_timeout: 10.0,
            max_output_lines: 10_000,
        }
    }
}

impl ExecLimits {
    pub fn compile_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.compile_timeout)
    }

    pub fn run_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.run_timeout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Parents kept by rank per generation (W).
    pub beam_width: Arity,
    /// Drafts sampled in generation 0.
    pub n_draft: Arity,
    /// Instructions per selected parent.
    pub n_explain: usize,
    /// Repairs per instruction.
    pub n_debug: usize,
    /// Total program budget (M).
    pub max_programs: usize,
    pub selection: Selection,
    pub seed: u64,
    pub exec_limits: ExecLimits,
    pub instruct: InstructMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beam_width: Arity::Finite(10),
            n_draft: Arity::Finite(10),
            n_explain: 2,
            n_debug: 10,
            max_programs: 100,
            selection: Selection::Tournament,
            seed: 0,
            exec_limits: ExecLimits::default(),
            instruct: InstructMode::Llm,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl ConfigError {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

/// Normalizes `inf` sentinels to `max_programs` and checks every invariant.
pub fn validate_config(config: SearchConfig) -> Result<SearchConfig, ConfigError> {
    let mut config = config;
    let m = config.max_programs;
    if m == 0 {
        return Err(ConfigError::new("max_programs", "max_programs must be at least 1"));
    }
    config.beam_width = Arity::Finite(config.beam_width.resolve(m));
    config.n_draft = Arity::Finite(config.n_draft.resolve(m));

    if config.beam_width.resolve(m) == 0 {
        return Err(ConfigError::new("beam_width", "beam_width must be at least 1"));
    }
    let n_draft = config.n_draft.resolve(m);
    if n_draft == 0 {
        return Err(ConfigError::new("n_draft", "n_draft must be at least 1"));
    }
    if n_draft > m {
        return Err(ConfigError::new("n_draft", "n_draft exceeds max_programs"));
    }
    if config.n_explain == 0 {
        return Err(ConfigError::new("n_explain", "n_explain must be at least 1"));
    }
    if config.n_debug == 0 {
        return Err(ConfigError::new("n_debug", "n_debug must be at least 1"));
    }
    let limits = &config.exec_limits;
    if !(limits.compile_timeout.is_finite() && limits.compile_timeout > 0.0) {
        return Err(ConfigError::new(
            "exec_limits.compile_timeout",
            "compile_timeout must be a positive number of seconds",
        ));
    }
    if !(limits.run_timeout.is_finite() && limits.run_timeout > 0.0) {
        return Err(ConfigError::new(
            "exec_limits.run_timeout",
            "run_timeout must be a positive number of seconds",
        ));
    }
    if limits.max_output_lines == 0 {
        return Err(ConfigError::new(
            "exec_limits.max_output_lines",
            "max_output_lines must be at least 1",
        ));
    }
    Ok(config)
}

impl SearchConfig {
    pub fn validate(self) -> Result<SearchConfig, ConfigError> {
        validate_config(self)
    }

    pub fn beam_width(&self) -> usize {
        self.beam_width.resolve(self.max_programs)
    }

    pub fn n_draft(&self) -> usize {
        self.n_draft.resolve(self.max_programs)
    }
}

/// Children planned for a generation before budget truncation: `N_draft`
/// at generation 0, `W * N_explain * N_debug` afterwards.
pub fn children_per_generation(config: &SearchConfig, generation: u32) -> usize {
    if generation == 0 {
        config.n_draft()
    } else {
        config
            .beam_width()
            .saturating_mul(config.n_explain)
            .saturating_mul(config.n_debug)
    }
}
