//! Benchmark ingestion: PSB2 problems and HumanEval-style suites.

mod humaneval;
mod psb2;
mod pyrepr;
mod split;

use thiserror::Error;

pub use humaneval::load_humaneval_x;
pub use psb2::{fetch_psb2, load_psb2, value_lines, Psb2Options, PSB2_PROBLEMS};
pub use pyrepr::{python_repr, python_str};
pub use split::{split_tests, SplitError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("problem `{0}` not found under the dataset root")]
    MissingProblem(String),
    #[error("{path}, record {index}: {message}")]
    Malformed { path: String, index: usize, message: String },
    #[error("problem `{problem}` needs {needed} {what} cases but only {available} are available")]
    Insufficient {
        problem: String,
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("no description for problem `{0}` (add description.txt or descriptions.json)")]
    MissingDescription(String),
    #[error("{task_id}: {source}")]
    Split {
        task_id: String,
        #[source]
        source: SplitError,
    },
    #[error("dataset fetch failed: {0}")]
    Fetch(String),
}
