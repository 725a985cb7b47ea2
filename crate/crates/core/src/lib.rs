//! Program synthesis by iterated repair: draft candidates with a language
//! model, run them against tests, turn failures into repair instructions,
//! generate repairs, and keep the best candidates for the next round.

pub mod bench;
pub mod config;
pub mod debug;
pub mod execute;
pub mod grid;
pub mod instruct;
pub mod llm;
pub mod metrics;
pub mod rank;
pub mod runlog;
mod scan;
pub mod search;
pub mod synthesize;
pub mod template;
pub mod types;

pub use config::{validate_config, Arity, ExecLimits, InstructMode, SearchConfig, Selection};
pub use execute::{ExecutionOutcome, ExitStatus, Sandbox, Toolchain};
pub use llm::{HttpBackend, ModelBackend, ScriptedBackend};
pub use search::{run_matrix, solve, Backends, SearchContext, SearchError, SearchResult};
pub use template::Templates;
pub use types::{Candidate, CandidateId, Language, Problem, TestCase};
