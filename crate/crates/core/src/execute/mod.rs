//! Compile and run candidates against test cases, and score the outcomes.

mod process;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::ExecLimits;
use crate::scan::strip_cpp_main;
use crate::types::{mean, CaseBody, Candidate, Language, TestCase};

/// Bytes of stderr kept per run.
pub const STDERR_CAP: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Ok,
    NonzeroExit,
    CompileError,
    Timeout,
    OutputFlood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub stdout_lines: Vec<String>,
    pub stderr: String,
    pub exit_status: ExitStatus,
    pub duration: Duration,
}

impl ExecutionOutcome {
    pub fn ok(stdout_lines: Vec<String>, stderr: impl Into<String>) -> Self {
        Self {
            stdout_lines,
            stderr: stderr.into(),
            exit_status: ExitStatus::Ok,
            duration: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum SandboxError {
    #[error("toolchain `{0}` not found; install it or configure its name")]
    ToolchainMissing(String),
    #[error("sandbox I/O failure: {0}")]
    Io(String),
    #[error("nothing to evaluate: case list is empty")]
    NoCases,
}

impl From<std::io::Error> for SandboxError {
    fn from(e: std::io::Error) -> Self {
        SandboxError::Io(e.to_string())
    }
}

/// Interpreter and compiler commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Toolchain {
    pub python: String,
    pub python_args: Vec<String>,
    pub cpp_compiler: String,
    pub cpp_flags: Vec<String>,
}

impl Default for Toolchain {
    fn default() -> Self {
        Self {
            python: "python3".into(),
            python_args: vec![],
            cpp_compiler: "g++".into(),
            cpp_flags: vec!["-std=c++17".into(), "-O2".into()],
        }
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    Ready { program: PathBuf, args: Vec<String>, dir: PathBuf },
    CompileFailed { stderr: String, duration: Duration },
}

type PrepareSlot = Arc<OnceLock<Result<Prepared, SandboxError>>>;

/// Runs programs in per-source scratch directories under a root directory.
/// Each directory holds the source, the binary (C++), and per-case
/// `*.stdout` / `*.stderr` captures.
pub struct Sandbox {
    toolchain: Toolchain,
    root: PathBuf,
    _temp: Option<tempfile::TempDir>,
    pool: Option<rayon::ThreadPool>,
    prepared: Mutex<HashMap<String, PrepareSlot>>,
}

impl std::fmt::Debug for Sandbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sandbox")
            .field("toolchain", &self.toolchain)
            .field("root", &self.root)
            .finish()
    }
}

fn source_digest(language: Language, source: &str) -> String {
    let mut h = Sha256::new();
    h.update(language.as_str().as_bytes());
    h.update([0]);
    h.update(source.as_bytes());
    hex::encode(h.finalize())
}

/// Hex SHA-256 of a program text.
pub fn digest_source(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

impl Sandbox {
    /// Sandbox rooted in a fresh temporary directory, removed on drop.
    pub fn new(toolchain: Toolchain) -> Result<Self, SandboxError> {
        let temp = tempfile::Builder::new().prefix("repairloop-").tempdir()?;
        let root = temp.path().to_path_buf();
        Ok(Self {
            toolchain,
            root,
            _temp: Some(temp),
            pool: None,
            prepared: Mutex::new(HashMap::new()),
        })
    }

    /// Sandbox writing into `root`, which is kept after the run.
    pub fn in_dir(toolchain: Toolchain, root: &Path) -> Result<Self, SandboxError> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            toolchain,
            root: root.canonicalize()?,
            _temp: None,
            pool: None,
            prepared: Mutex::new(HashMap::new()),
        })
    }

    /// Runs up to `workers` cases concurrently (1 = sequential).
    pub fn with_workers(mut self, workers: usize) -> Result<Self, SandboxError> {
        self.pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| SandboxError::Io(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Fails with [`SandboxError::ToolchainMissing`] if the interpreter or
    /// compiler for `language` cannot be started.
    pub fn check_toolchain(&self, language: Language) -> Result<(), SandboxError> {
        let (tool, flag) = match language {
            Language::Python => (&self.toolchain.python, "--version"),
            Language::Cpp => (&self.toolchain.cpp_compiler, "--version"),
        };
        match std::process::Command::new(tool)
            .arg(flag)
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .status()
        {
            Ok(_) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(SandboxError::ToolchainMissing(tool.clone())),
            Err(e) => Err(e.into()),
        }
    }

    fn prepare(&self, language: Language, source: &str, limits: &ExecLimits) -> Result<Prepared, SandboxError> {
        let digest = source_digest(language, source);
        let slot = {
            let mut map = self.prepared.lock().expect("prepare cache poisoned");
            Arc::clone(map.entry(digest.clone()).or_default())
        };
        slot.get_or_init(|| self.build(language, source, &digest, limits)).clone()
    }

    fn program_dir(&self, digest: &str) -> PathBuf {
        self.root.join(&digest[..16])
    }

    fn build(
        &self,
        language: Language,
        source: &str,
        digest: &str,
        limits: &ExecLimits,
    ) -> Result<Prepared, SandboxError> {
        let dir = self.program_dir(digest);
        std::fs::create_dir_all(&dir)?;
        let file = format!("main.{}", language.source_extension());
        std::fs::write(dir.join(&file), source)?;
        match language {
            Language::Python => {
                let mut args = self.toolchain.python_args.clone();
                args.push(file);
                Ok(Prepared::Ready {
                    program: PathBuf::from(&self.toolchain.python),
                    args,
                    dir,
                })
            }
            Language::Cpp => {
                let mut args = self.toolchain.cpp_flags.clone();
                args.extend(["-o".into(), "main".into(), file]);
                let compiler = PathBuf::from(&self.toolchain.cpp_compiler);
                let run = process::run(process::Spec {
                    program: &compiler,
                    args: &args,
                    cwd: &dir,
                    stdin: Vec::new(),
                    timeout: limits.compile_timeout(),
                    max_lines: usize::MAX,
                    stderr_cap: STDERR_CAP,
                })
                .map_err(|e| missing_or_io(e, &self.toolchain.cpp_compiler))?;
                if run.timed_out || !run.status.success() {
                    let mut stderr = run.stderr;
                    if run.timed_out {
                        stderr.push_str("\ncompilation timed out");
                    }
                    if stderr.trim().is_empty() {
                        stderr = format!("compilation failed ({})", run.status);
                    }
                    return Ok(Prepared::CompileFailed {
                        stderr,
                        duration: run.duration,
                    });
                }
                Ok(Prepared::Ready {
                    program: dir.join("main"),
                    args: vec![],
                    dir,
                })
            }
        }
    }

    /// Program text actually executed for `case`: the source itself for I/O
    /// cases, or source followed by the assertion snippet.
    pub fn program_for(language: Language, source: &str, case: &TestCase) -> String {
        match case.body() {
            CaseBody::IoPair { .. } => source.to_owned(),
            CaseBody::Assertion { snippet } => {
                let base = match language {
                    Language::Python => source.to_owned(),
                    Language::Cpp => strip_cpp_main(source),
                };
                format!("{}\n\n{}\n", base.trim_end(), snippet.trim_end())
            }
        }
    }

    /// Runs `source` on one case. `label` names the capture files
    /// (`{label}.stdout`, `{label}.stderr`) in the program's directory.
    pub fn run_source(
        &self,
        language: Language,
        source: &str,
        case: &TestCase,
        label: &str,
        limits: &ExecLimits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        let program = Self::program_for(language, source, case);
        let outcome = match self.prepare(language, &program, limits)? {
            Prepared::CompileFailed { stderr, duration } => ExecutionOutcome {
                stdout_lines: vec![],
                stderr,
                exit_status: ExitStatus::CompileError,
                duration,
            },
            Prepared::Ready { program: exe, args, dir } => {
                let stdin = match case.input_lines() {
                    Some(lines) if !lines.is_empty() => {
                        let mut text = lines.join("\n");
                        text.push('\n');
                        text.into_bytes()
                    }
                    _ => Vec::new(),
                };
                let run = process::run(process::Spec {
                    program: &exe,
                    args: &args,
                    cwd: &dir,
                    stdin,
                    timeout: limits.run_timeout(),
                    max_lines: limits.max_output_lines,
                    stderr_cap: STDERR_CAP,
                })
                .map_err(|e| missing_or_io(e, &exe.to_string_lossy()))?;
                let exit_status = if run.flooded {
                    ExitStatus::OutputFlood
                } else if run.timed_out {
                    ExitStatus::Timeout
                } else if run.status.success() {
                    ExitStatus::Ok
                } else {
                    ExitStatus::NonzeroExit
                };
                ExecutionOutcome {
                    stdout_lines: run.stdout_lines,
                    stderr: run.stderr,
                    exit_status,
                    duration: run.duration,
                }
            }
        };
        let dir = self.program_dir(&source_digest(language, source));
        std::fs::create_dir_all(&dir)?;
        let mut stdout = outcome.stdout_lines.join("\n");
        if !outcome.stdout_lines.is_empty() {
            stdout.push('\n');
        }
        std::fs::write(dir.join(format!("{label}.stdout")), stdout)?;
        std::fs::write(dir.join(format!("{label}.stderr")), &outcome.stderr)?;
        Ok(outcome)
    }

    pub fn run_candidate(
        &self,
        language: Language,
        candidate: &Candidate,
        case: &TestCase,
        case_index: usize,
        limits: &ExecLimits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        self.run_source(language, &candidate.source, case, &format!("case-{case_index}"), limits)
    }

    /// Runs `source` on every case (in parallel when workers > 1) and scores
    /// each outcome. Capture files are named `{label}-{j}`.
    pub fn evaluate_source(
        &self,
        language: Language,
        source: &str,
        cases: &[TestCase],
        label: &str,
        limits: &ExecLimits,
    ) -> Result<Evaluation, SandboxError> {
        if cases.is_empty() {
            return Err(SandboxError::NoCases);
        }
        let job = |(j, case): (usize, &TestCase)| {
            self.run_source(language, source, case, &format!("{label}-{j}"), limits)
        };
        let outcomes: Vec<ExecutionOutcome> = match &self.pool {
            Some(pool) => pool.install(|| cases.par_iter().enumerate().map(job).collect::<Result<_, _>>())?,
            None => cases.iter().enumerate().map(job).collect::<Result<_, _>>()?,
        };
        let per_test_scores: Vec<f64> = outcomes.iter().zip(cases).map(|(o, c)| score_case(o, c)).collect();
        Ok(Evaluation {
            avg_score: mean(&per_test_scores),
            per_test_scores,
            outcomes,
        })
    }

    /// Evaluates a candidate on `cases` and records the scores on it.
    pub fn evaluate(
        &self,
        language: Language,
        candidate: &mut Candidate,
        cases: &[TestCase],
        limits: &ExecLimits,
    ) -> Result<Evaluation, SandboxError> {
        let evaluation = self.evaluate_source(language, &candidate.source, cases, "case", limits)?;
        candidate.record_scores(evaluation.per_test_scores.clone());
        Ok(evaluation)
    }
}

fn missing_or_io(e: std::io::Error, tool: &str) -> SandboxError {
    if e.kind() == std::io::ErrorKind::NotFound {
        SandboxError::ToolchainMissing(tool.to_owned())
    } else {
        e.into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_test_scores: Vec<f64>,
    pub avg_score: f64,
    pub outcomes: Vec<ExecutionOutcome>,
}

fn normalize(lines: &[String]) -> Vec<&str> {
    let mut out: Vec<&str> = lines.iter().map(|l| l.strip_suffix('\n').unwrap_or(l)).collect();
    if out.last() == Some(&"") {
        out.pop();
    }
    out
}

/// `(matching lines, max(|expected|, |actual|))` after normalization.
pub fn line_matches(actual: &[String], expected: &[String]) -> (usize, usize) {
    let actual = normalize(actual);
    let expected = normalize(expected);
    let total = actual.len().max(expected.len());
    let matched = actual.iter().zip(&expected).filter(|(a, e)| a == e).count();
    (matched, total)
}

/// Line accuracy of an I/O run: 0 unless the run exited cleanly with empty
/// stderr, otherwise matching lines over the longer of the two streams.
/// Two empty streams count as a full match.
pub fn score_outcome(outcome: &ExecutionOutcome, expected: &[String]) -> f64 {
    if outcome.exit_status != ExitStatus::Ok || !outcome.stderr.is_empty() {
        return 0.0;
    }
    let (matched, total) = line_matches(&outcome.stdout_lines, expected);
    if total == 0 {
        1.0
    } else {
        matched as f64 / total as f64
    }
}

/// Score of one case: line accuracy for I/O cases, pass/fail for assertions.
pub fn score_case(outcome: &ExecutionOutcome, case: &TestCase) -> f64 {
    match case.body() {
        CaseBody::IoPair {
            expected_output_lines, ..
        } => score_outcome(outcome, expected_output_lines),
        CaseBody::Assertion { .. } => {
            if outcome.exit_status == ExitStatus::Ok && outcome.stderr.is_empty() {
                1.0
            } else {
                0.0
            }
        }
    }
}
