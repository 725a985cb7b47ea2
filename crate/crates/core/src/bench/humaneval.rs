//! HumanEval-style suites: one JSON record per line with `task_id`, `prompt`,
//! optional `declaration`/`entry_point`, and an aggregate `test` function.
//! Gzipped files are read transparently.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::Deserialize;

use super::split::split_tests;
use super::DatasetError;
use crate::synthesize::PROMPT_CASE_LIMIT;
use crate::types::{Language, Problem};

#[derive(Deserialize)]
struct Record {
    task_id: String,
    prompt: String,
    test: String,
    #[serde(default)]
    entry_point: Option<String>,
}

fn open(path: &Path) -> Result<Box<dyn BufRead>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

fn has_check_call(test: &str) -> bool {
    test.lines().any(|l| l.starts_with("check(") || l.starts_with("check ("))
}

/// Loads every problem in `path`. Validation and test cases are both the
/// split assertions of the record's test function.
pub fn load_humaneval_x(path: &Path, language: Language) -> Result<Vec<Problem>, DatasetError> {
    let shown = path.display().to_string();
    let malformed = |index, message: String| DatasetError::Malformed {
        path: shown.clone(),
        index,
        message,
    };
    let mut problems = Vec::new();
    for (index, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| malformed(index, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| malformed(index, e.to_string()))?;
        let mut test = record.test;
        if language == Language::Python && !has_check_call(&test) {
            let entry = record
                .entry_point
                .as_deref()
                .ok_or_else(|| malformed(index, "test never calls check() and no entry_point given".into()))?;
            test = format!("{}\n\ncheck({entry})\n", test.trim_end());
        }
        let cases = split_tests(&test, language).map_err(|source| DatasetError::Split {
            task_id: record.task_id.clone(),
            source,
        })?;
        let prompt_cases = cases.iter().take(PROMPT_CASE_LIMIT).cloned().collect();
        problems.push(Problem {
            id: record.task_id.clone(),
            name: record.task_id,
            description: record.prompt,
            language,
            prompt_cases,
            validation_cases: cases.clone(),
            test_cases: cases,
        });
    }
    Ok(problems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn record(id: &str) -> String {
        serde_json::json!({
            "task_id": id,
            "prompt": "def f(x):\n    \"\"\"Double x.\"\"\"\n",
            "entry_point": "f",
            "test": "def check(candidate):\n    assert candidate(1) == 2\n    assert candidate(0) == 0\n",
        })
        .to_string()
    }

    #[test]
    fn loads_and_appends_call() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("he.jsonl");
        std::fs::write(&path, format!("{}\n{}\n", record("Python/0"), record("Python/1"))).unwrap();
        let problems = load_humaneval_x(&path, Language::Python).unwrap();
        assert_eq!(problems.len(), 2);
        assert_eq!(problems[1].id, "Python/1");
        assert_eq!(problems[0].validation_cases.len(), 2);
        assert_eq!(problems[0].validation_cases, problems[0].test_cases);
        assert!(problems[0].validation_cases[0].snippet().unwrap().ends_with("check(f)\n"));
    }

    #[test]
    fn truncated_record_reports_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("he.jsonl");
        let full = record("Python/0");
        std::fs::write(&path, format!("{full}\n{}\n", &full[..full.len() / 2])).unwrap();
        match load_humaneval_x(&path, Language::Python) {
            Err(DatasetError::Malformed { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reads_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("he.jsonl.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::default());
        writeln!(enc, "{}", record("CPP/137")).unwrap();
        enc.finish().unwrap();
        let problems = load_humaneval_x(&path, Language::Python).unwrap();
        assert_eq!(problems[0].id, "CPP/137");
    }
}
