//! JSONL run log: one record per evaluated candidate and one terminal record
//! per run.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{InstructMode, SearchConfig, Selection};
use crate::types::{CandidateId, CandidateOrigin, Language};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("run log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run log {path}, line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("run log {path}, line {line}: unsupported schema version {found}")]
    Schema { path: String, line: usize, found: u32 },
    #[error("cannot encode log record: {0}")]
    Encode(String),
}

/// Timestamps for log records. `Logical` yields 1, 2, 3, ... so logs of
/// deterministic runs are byte-identical.
#[derive(Debug)]
pub enum Clock {
    Wall,
    Logical(AtomicU64),
}

impl Clock {
    pub fn logical() -> Self {
        Clock::Logical(AtomicU64::new(0))
    }

    /// Seconds since the Unix epoch, or the next tick.
    pub fn now(&self) -> f64 {
        match self {
            Clock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            Clock::Logical(tick) => (tick.fetch_add(1, Ordering::SeqCst) + 1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub schema: u32,
    pub run_id: String,
    pub problem_id: String,
    pub candidate_id: CandidateId,
    pub parent_id: Option<CandidateId>,
    pub generation: u32,
    pub origin: CandidateOrigin,
    pub temperature: f64,
    pub instruction: Option<String>,
    pub source_digest: String,
    pub per_test_scores: Vec<f64>,
    pub avg_score: f64,
    pub created_at: f64,
    pub evaluated_at: f64,
}

/// Hyperparameters identifying a configuration in reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub beam_width: usize,
    pub n_draft: usize,
    pub n_explain: usize,
    pub n_debug: usize,
    pub max_programs: usize,
    pub selection: Selection,
    pub instruct: InstructMode,
}

impl From<&SearchConfig> for ConfigSummary {
    fn from(c: &SearchConfig) -> Self {
        Self {
            beam_width: c.beam_width(),
            n_draft: c.n_draft(),
            n_explain: c.n_explain,
            n_debug: c.n_debug,
            max_programs: c.max_programs,
            selection: c.selection,
            instruct: c.instruct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: u32,
    pub run_id: String,
    pub problem_id: String,
    pub dataset: Option<String>,
    pub language: Language,
    pub model: String,
    pub config: ConfigSummary,
    pub seed: u64,
    pub repeat: u32,
    pub status: RunStatus,
    pub error: Option<String>,
    pub solved: bool,
    pub solution_id: Option<CandidateId>,
    pub solution_source: Option<String>,
    pub programs_generated: u64,
    pub epg: Option<u64>,
    pub final_tpr: Option<f64>,
    pub generations: u32,
    pub best_avg_score: Option<f64>,
    pub last_avg_score: Option<f64>,
    pub finished_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Candidate(CandidateRecord),
    Result(ResultRecord),
}

impl LogRecord {
    pub fn run_id(&self) -> &str {
        match self {
            LogRecord::Candidate(c) => &c.run_id,
            LogRecord::Result(r) => &r.run_id,
        }
    }

    fn schema(&self) -> u32 {
        match self {
            LogRecord::Candidate(c) => c.schema,
            LogRecord::Result(r) => r.schema,
        }
    }
}

/// Stable id of one run: a digest of the problem, configuration, seed, and
/// repeat index.
pub fn run_id(problem_id: &str, config: &SearchConfig, repeat: u32) -> String {
    let mut h = Sha256::new();
    h.update(problem_id.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update([0]);
    h.update(repeat.to_le_bytes());
    hex::encode(h.finalize())[..16].to_owned()
}

/// Appends records to a JSONL file, flushing after each one. Shareable
/// across threads.
#[derive(Debug)]
pub struct LogWriter {
    path: Option<PathBuf>,
    out: Mutex<Box<dyn WriteDebug>>,
    clock: Clock,
}

trait WriteDebug: Write + Send + std::fmt::Debug {}
impl<T: Write + Send + std::fmt::Debug> WriteDebug for T {}

#[derive(Debug, Default)]
struct Discard;

impl Write for Discard {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl LogWriter {
    /// Opens `path` for appending, creating it (and its parent) if needed.
    pub fn append(path: &Path, clock: Clock) -> Result<Self, LogError> {
        let io = |source| LogError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            out: Mutex::new(Box::new(BufWriter::new(file))),
            clock,
        })
    }

    /// Truncates `path` and writes from the start.
    pub fn create(path: &Path, clock: Clock) -> Result<Self, LogError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| LogError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        File::create(path).map_err(|source| LogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::append(path, clock)
    }

    /// A writer that drops every record.
    pub fn discard(clock: Clock) -> Self {
        Self {
            path: None,
            out: Mutex::new(Box::new(Discard)),
            clock,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn write(&self, record: &LogRecord) -> Result<(), LogError> {
        let mut line = serde_json::to_string(record).map_err(|e| LogError::Encode(e.to_string()))?;
        line.push('\n');
        let mut out = self.out.lock().expect("log writer poisoned");
        out.write_all(line.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|source| LogError::Io {
                path: self.path.as_ref().map_or("<memory>".into(), |p| p.display().to_string()),
                source,
            })
    }
}

/// Reads every record of a JSONL log. A final line without a newline that
/// fails to parse (an interrupted write) is ignored.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| LogError::Io {
        path: name.clone(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|source| LogError::Io {
            path: name.clone(),
            source,
        })?;
        if n == 0 {
            break;
        }
        number += 1;
        if line.trim().is_empty() {
            continue;
        }
        let complete = line.ends_with('\n');
        match serde_json::from_str::<LogRecord>(line.trim_end()) {
            Ok(record) => {
                if record.schema() != SCHEMA_VERSION {
                    return Err(LogError::Schema {
                        path: name,
                        line: number,
                        found: record.schema(),
                    });
                }
                records.push(record);
            }
            Err(_) if !complete => break,
            Err(e) => {
                return Err(LogError::Parse {
                    path: name,
                    line: number,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn candidate(run: &str, id: u64) -> LogRecord {
        LogRecord::Candidate(CandidateRecord {
            schema: SCHEMA_VERSION,
            run_id: run.into(),
            problem_id: "p".into(),
            candidate_id: id,
            parent_id: None,
            generation: 0,
            origin: CandidateOrigin::Draft,
            temperature: 0.0,
            instruction: None,
            source_digest: "d".into(),
            per_test_scores: vec![1.0],
            avg_score: 1.0,
            created_at: 1.0,
            evaluated_at: 2.0,
        })
    }

    #[test]
    fn round_trip_and_truncated_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("logs/run.jsonl");
        let w = LogWriter::create(&path, Clock::logical()).unwrap();
        w.write(&candidate("r", 0)).unwrap();
        w.write(&candidate("r", 1)).unwrap();
        drop(w);
        let mut text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"record\":\"candidate\",\"schema\":1,"));
        text.push_str("{\"record\":\"cand");
        std::fs::write(&path, &text).unwrap();
        let records = read_log(&path).unwrap();
        assert_eq!(records, vec![candidate("r", 0), candidate("r", 1)]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{oops}\n").unwrap();
        assert!(matches!(read_log(&path), Err(LogError::Parse { line: 1, .. })));
    }

    #[test]
    fn logical_clock_ticks() {
        let c = Clock::logical();
        assert_eq!((c.now(), c.now()), (1.0, 2.0));
    }

    #[test]
    fn run_ids_differ_per_repeat_and_seed() {
        let c = SearchConfig::default();
        let other = SearchConfig { seed: 1, ..c.clone() };
        assert_ne!(run_id("p", &c, 0), run_id("p", &c, 1));
        assert_ne!(run_id("p", &c, 0), run_id("p", &other, 0));
        assert_eq!(run_id("p", &c, 0), run_id("p", &c, 0));
    }
}
