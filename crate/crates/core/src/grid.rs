//! Preset hyperparameter grids: arity sweeps and per-setting lexicase runs.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::config::{Arity, InstructMode, SearchConfig, Selection};
use crate::types::Language;

/// Independent runs per configuration in the chat-model series.
pub const CHAT_REPEATS: u32 = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("unknown grid `{0}` (expected static-arity, chat-arity or lexicase)")]
    UnknownGrid(String),
    #[error("unknown model family `{0}` (expected gpt-3.5 or llama-3)")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// Static instruction, one explanation, arity swept up to 1000 programs.
    StaticArity,
    /// Model-written explanations, two per parent, arity swept up to 100 programs.
    ChatArity,
    /// Single best arity per benchmark/model/language, lexicase ranking.
    Lexicase,
}

impl FromStr for Grid {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static-arity" => Ok(Grid::StaticArity),
            "chat-arity" => Ok(Grid::ChatArity),
            "lexicase" => Ok(Grid::Lexicase),
            other => Err(GridError::UnknownGrid(other.to_string())),
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grid::StaticArity => "static-arity",
            Grid::ChatArity => "chat-arity",
            Grid::Lexicase => "lexicase",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Psb2,
    HumanEval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Gpt35,
    Llama3,
}

impl FromStr for ModelFamily {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        if lower.contains("gpt-3.5") || lower.contains("gpt35") {
            Ok(ModelFamily::Gpt35)
        } else if lower.contains("llama3") || lower.contains("llama-3") || lower.contains("llama 3") {
            Ok(ModelFamily::Llama3)
        } else {
            Err(GridError::UnknownModel(s.to_string()))
        }
    }
}

fn arity_config(n: Arity, n_explain: usize, max_programs: usize, instruct: InstructMode) -> SearchConfig {
    SearchConfig {
        beam_width: n,
        n_draft: n,
        n_explain,
        // With an unbounded arity the whole budget goes to drafts, so the
        // repair fan-out never applies.
        n_debug: n.resolve(max_programs),
        max_programs,
        selection: Selection::Tournament,
        instruct,
        ..SearchConfig::default()
    }
}

/// Best arity used for the lexicase runs of each benchmark/model/language.
pub fn lexicase_arity(benchmark: Benchmark, model: ModelFamily, language: Language) -> usize {
    use {Benchmark::*, Language::*, ModelFamily::*};
    match (benchmark, model, language) {
        (Psb2, Gpt35, Cpp) => 2,
        (Psb2, Gpt35, Python) => 16,
        (Psb2, Llama3, _) => 16,
        (HumanEval, Gpt35, Cpp) => 2,
        (HumanEval, Gpt35, Python) => 4,
        (HumanEval, Llama3, _) => 10,
    }
}

pub fn lexicase_config(benchmark: Benchmark, model: ModelFamily, language: Language) -> SearchConfig {
    let n = lexicase_arity(benchmark, model, language);
    SearchConfig {
        selection: Selection::Lexicase,
        ..arity_config(Arity::Finite(n), 2, 100, InstructMode::Llm)
    }
}

impl Grid {
    /// Configs of the grid. The lexicase grid depends on the benchmark,
    /// model and language; the arity grids ignore them.
    pub fn configs(self, benchmark: Benchmark, model: ModelFamily, language: Language) -> Vec<SearchConfig> {
        match self {
            Grid::StaticArity => [1, 10, 100]
                .into_iter()
                .map(Arity::Finite)
                .chain([Arity::Inf])
                .map(|n| arity_config(n, 1, 1000, InstructMode::Static))
                .collect(),
            Grid::ChatArity => [1, 4, 8, 10, 16]
                .into_iter()
                .map(Arity::Finite)
                .chain([Arity::Inf])
                .map(|n| arity_config(n, 2, 100, InstructMode::Llm))
                .collect(),
            Grid::Lexicase => vec![lexicase_config(benchmark, model, language)],
        }
    }

    pub fn repeats(self) -> u32 {
        match self {
            Grid::StaticArity => 1,
            Grid::ChatArity | Grid::Lexicase => CHAT_REPEATS,
        }
    }
}
