//! Domain values shared by every stage of the loop: problems, their test
//! cases, and the candidate programs produced while searching.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Target language of a problem. Only the two languages with a bundled
/// toolchain harness are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    Cpp,
}

impl Language {
    /// Human-facing name used inside prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Language::Python => "Python",
            Language::Cpp => "C++",
        }
    }

    pub fn comment_prefix(self) -> &'static str {
        match self {
            Language::Python => "#",
            Language::Cpp => "//",
        }
    }

    pub fn source_extension(self) -> &'static str {
        match self {
            Language::Python => "py",
            Language::Cpp => "cpp",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::Cpp => "cpp",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "py" | "python3" => Ok(Language::Python),
            "cpp" | "c++" | "cxx" => Ok(Language::Cpp),
            other => Err(format!("unsupported language `{other}` (expected python or cpp)")),
        }
    }
}

/// Where a PSB-style case came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseOrigin {
    Edge,
    Random,
    #[default]
    Unspecified,
}

/// Payload of a test case: either stdin/stdout lines or a self-contained
/// assertion snippet appended to the candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseBody {
    IoPair {
        input_lines: Vec<String>,
        expected_output_lines: Vec<String>,
    },
    Assertion {
        snippet: String,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("assertion test case requires a non-empty snippet")]
pub struct EmptySnippet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    body: CaseBody,
    #[serde(default)]
    origin: CaseOrigin,
}

impl TestCase {
    pub fn io<I, O, S, T>(input: I, expected: O) -> Self
    where
        I: IntoIterator<Item = S>,
        O: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        Self {
            body: CaseBody::IoPair {
                input_lines: input.into_iter().map(Into::into).collect(),
                expected_output_lines: expected.into_iter().map(Into::into).collect(),
            },
            origin: CaseOrigin::Unspecified,
        }
    }

    pub fn assertion(snippet: impl Into<String>) -> Result<Self, EmptySnippet> {
        let snippet = snippet.into();
        if snippet.trim().is_empty() {
            return Err(EmptySnippet);
        }
        Ok(Self {
            body: CaseBody::Assertion { snippet },
            origin: CaseOrigin::Unspecified,
        })
    }

    pub fn with_origin(mut self, origin: CaseOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn body(&self) -> &CaseBody {
        &self.body
    }

    pub fn origin(&self) -> CaseOrigin {
        self.origin
    }

    pub fn input_lines(&self) -> Option<&[String]> {
        match &self.body {
            CaseBody::IoPair { input_lines, .. } => Some(input_lines),
            CaseBody::Assertion { .. } => None,
        }
    }

    pub fn expected_output_lines(&self) -> Option<&[String]> {
        match &self.body {
            CaseBody::IoPair {
                expected_output_lines,
                ..
            } => Some(expected_output_lines),
            CaseBody::Assertion { .. } => None,
        }
    }

    pub fn snippet(&self) -> Option<&str> {
        match &self.body {
            CaseBody::Assertion { snippet } => Some(snippet),
            CaseBody::IoPair { .. } => None,
        }
    }

    pub fn is_assertion(&self) -> bool {
        matches!(self.body, CaseBody::Assertion { .. })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProblemError {
    #[error("problem `{0}` has no validation cases")]
    NoValidationCases(String),
    #[error("problem id must not be empty")]
    EmptyId,
}

/// One benchmark task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub name: String,
    pub description: String,
    pub language: Language,
    /// Cases rendered into the draft prompt.
    pub prompt_cases: Vec<TestCase>,
    /// Cases used for scoring during the search.
    pub validation_cases: Vec<TestCase>,
    /// Held-out cases, used only for the final pass rate of a solution.
    pub test_cases: Vec<TestCase>,
}

impl Problem {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.id.is_empty() {
            return Err(ProblemError::EmptyId);
        }
        if self.validation_cases.is_empty() {
            return Err(ProblemError::NoValidationCases(self.id.clone()));
        }
        Ok(())
    }
}

pub type CandidateId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateOrigin {
    Draft,
    Repair,
}

/// One program in the search tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub parent_id: Option<CandidateId>,
    pub generation: u32,
    pub source: String,
    pub temperature: f64,
    pub origin: CandidateOrigin,
    pub instruction: Option<String>,
    pub per_test_scores: Option<Vec<f64>>,
    pub avg_score: Option<f64>,
}

impl Candidate {
    pub fn draft(id: CandidateId, source: String, temperature: f64) -> Self {
        Self {
            id,
            parent_id: None,
            generation: 0,
            source,
            temperature,
            origin: CandidateOrigin::Draft,
            instruction: None,
            per_test_scores: None,
            avg_score: None,
        }
    }

    pub fn repair(
        id: CandidateId,
        parent: &Candidate,
        source: String,
        temperature: f64,
        instruction: String,
    ) -> Self {
        Self {
            id,
            parent_id: Some(parent.id),
            generation: parent.generation + 1,
            source,
            temperature,
            origin: CandidateOrigin::Repair,
            instruction: Some(instruction),
            per_test_scores: None,
            avg_score: None,
        }
    }

    /// Stores per-test scores and their arithmetic mean.
    pub fn record_scores(&mut self, scores: Vec<f64>) {
        self.avg_score = Some(mean(&scores));
        self.per_test_scores = Some(scores);
    }

    /// True when every recorded score is exactly 1.
    pub fn is_perfect(&self) -> bool {
        match &self.per_test_scores {
            Some(scores) => !scores.is_empty() && scores.iter().all(|&s| s == 1.0),
            None => false,
        }
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Hands out candidate ids in creation order, starting at 0.
#[derive(Debug, Default, Clone)]
pub struct IdSequence {
    next: CandidateId,
}

impl IdSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&mut self) -> CandidateId {
        let id = self.next;
        self.next += 1;
        id
    }

    pub fn issued(&self) -> u64 {
        self.next
    }
}
