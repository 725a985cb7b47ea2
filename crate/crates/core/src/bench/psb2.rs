//! PSB2 loader. Expects the distribution's layout:
//! `<root>/[datasets/]<problem>/<problem>-{edge,random}.json`, each a JSON
//! object per line with `input1..` and `output1..` keys.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use super::pyrepr::python_str;
use super::DatasetError;
use crate::synthesize::PROMPT_CASE_LIMIT;
use crate::types::{CaseOrigin, Language, Problem, TestCase};

pub const PSB2_PROBLEMS: [&str; 25] = [
    "basement",
    "bouncing-balls",
    "bowling",
    "camel-case",
    "coin-sums",
    "cut-vector",
    "dice-game",
    "find-pair",
    "fizz-buzz",
    "fuel-cost",
    "gcd",
    "indices-of-substring",
    "leaders",
    "luhn",
    "mastermind",
    "middle-character",
    "paired-digits",
    "shopping-list",
    "snow-day",
    "solve-boolean",
    "spin-words",
    "square-digits",
    "substitution-cipher",
    "twitter",
    "vector-distance",
];

const S3_BASE: &str = "https://psb2-datasets.s3.amazonaws.com/PSB2/datasets";

#[derive(Debug, Clone)]
pub struct Psb2Options {
    pub language: Language,
    pub n_validation: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for Psb2Options {
    fn default() -> Self {
        Self {
            language: Language::Python,
            n_validation: 50,
            n_test: 2000,
            seed: 0,
        }
    }
}

/// Lines for one input or output value: a list becomes its length and then
/// its space-separated elements; anything else is one line of its Python
/// `str()`. Embedded newlines split into separate lines.
pub fn value_lines(value: &Value) -> Vec<String> {
    let text = match value {
        Value::Array(items) => {
            let elems: Vec<String> = items.iter().map(python_str).collect();
            format!("{}\n{}", items.len(), elems.join(" "))
        }
        other => python_str(other),
    };
    text.split('\n').map(str::to_owned).collect()
}

fn numbered<'a>(row: &'a Map<String, Value>, prefix: &str) -> Vec<&'a Value> {
    (1..).map_while(|i| row.get(&format!("{prefix}{i}"))).collect()
}

fn row_to_case(row: &Map<String, Value>, origin: CaseOrigin) -> Option<TestCase> {
    let inputs = numbered(row, "input");
    let outputs = numbered(row, "output");
    if outputs.is_empty() {
        return None;
    }
    let input: Vec<String> = inputs.into_iter().flat_map(value_lines).collect();
    let output: Vec<String> = outputs.into_iter().flat_map(value_lines).collect();
    Some(TestCase::io(input, output).with_origin(origin))
}

fn problem_dir(root: &Path, problem: &str) -> Option<PathBuf> {
    [root.join(problem), root.join("datasets").join(problem)]
        .into_iter()
        .find(|d| d.join(format!("{problem}-edge.json")).is_file())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .collect::<Result<_, _>>()
        .map_err(io_err(path))
}

fn parse_case(path: &Path, index: usize, line: &str, origin: CaseOrigin) -> Result<TestCase, DatasetError> {
    let malformed = |message: String| DatasetError::Malformed {
        path: path.display().to_string(),
        index,
        message,
    };
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let row = value.as_object().ok_or_else(|| malformed("row is not a JSON object".into()))?;
    row_to_case(row, origin).ok_or_else(|| malformed("row has no output1 field".into()))
}

fn description(root: &Path, dir: &Path, problem: &str) -> Result<String, DatasetError> {
    let local = dir.join("description.txt");
    if local.is_file() {
        return std::fs::read_to_string(&local)
            .map(|s| s.trim().to_owned())
            .map_err(io_err(&local));
    }
    for index in [root.join("descriptions.json"), root.join("datasets").join("descriptions.json")] {
        if index.is_file() {
            let text = std::fs::read_to_string(&index).map_err(io_err(&index))?;
            let map: BTreeMap<String, String> =
                serde_json::from_str(&text).map_err(|e| DatasetError::Malformed {
                    path: index.display().to_string(),
                    index: 0,
                    message: e.to_string(),
                })?;
            if let Some(d) = map.get(problem) {
                return Ok(d.trim().to_owned());
            }
        }
    }
    Err(DatasetError::MissingDescription(problem.to_owned()))
}

/// Loads one PSB2 problem.
///
/// Validation cases are the edge cases first (a seeded sample of them when
/// there are more than `n_validation`), then seeded random cases to fill up.
/// Test cases are a seeded sample of the random cases that were not used for
/// validation. Prompt cases are the first five validation cases.
pub fn load_psb2(root: &Path, problem_id: &str, options: &Psb2Options) -> Result<Problem, DatasetError> {
    let dir = problem_dir(root, problem_id).ok_or_else(|| DatasetError::MissingProblem(problem_id.to_owned()))?;
    let edge_path = dir.join(format!("{problem_id}-edge.json"));
    let random_path = dir.join(format!("{problem_id}-random.json"));
    let edge_rows = read_lines(&edge_path)?;
    let random_rows = read_lines(&random_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let mut validation = Vec::with_capacity(options.n_validation);
    let random_for_validation = if options.n_validation < edge_rows.len() {
        let mut picked = rand::seq::index::sample(&mut rng, edge_rows.len(), options.n_validation).into_vec();
        picked.sort_unstable();
        for i in picked {
            validation.push(parse_case(&edge_path, i, &edge_rows[i], CaseOrigin::Edge)?);
        }
        0
    } else {
        for (i, row) in edge_rows.iter().enumerate() {
            validation.push(parse_case(&edge_path, i, row, CaseOrigin::Edge)?);
        }
        options.n_validation - edge_rows.len()
    };

    let needed = random_for_validation + options.n_test;
    if needed > random_rows.len() {
        return Err(DatasetError::Insufficient {
            problem: problem_id.to_owned(),
            what: "random",
            needed,
            available: random_rows.len(),
        });
    }
    let drawn = rand::seq::index::sample(&mut rng, random_rows.len(), needed).into_vec();
    let (val_idx, test_idx) = drawn.split_at(random_for_validation);
    for &i in val_idx {
        validation.push(parse_case(&random_path, i, &random_rows[i], CaseOrigin::Random)?);
    }
    let test_cases = test_idx
        .iter()
        .map(|&i| parse_case(&random_path, i, &random_rows[i], CaseOrigin::Random))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Problem {
        id: problem_id.to_owned(),
        name: problem_id.to_owned(),
        description: description(root, &dir, problem_id)?,
        language: options.language,
        prompt_cases: validation.iter().take(PROMPT_CASE_LIMIT).cloned().collect(),
        validation_cases: validation,
        test_cases,
    })
}

/// Downloads the edge and random files of `problem_id` into
/// `<root>/datasets/<problem_id>/` with `curl`, skipping files already
/// present.
pub fn fetch_psb2(root: &Path, problem_id: &str) -> Result<PathBuf, DatasetError> {
    let dir = root.join("datasets").join(problem_id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for kind in ["edge", "random"] {
        let file = dir.join(format!("{problem_id}-{kind}.json"));
        if file.is_file() {
            continue;
        }
        let url = format!("{S3_BASE}/{problem_id}/{problem_id}-{kind}.json");
        let status = Command::new("curl")
            .args(["--fail", "--silent", "--show-error", "--location", "--output"])
            .arg(&file)
            .arg(&url)
            .status()
            .map_err(|e| DatasetError::Fetch(format!("cannot run curl: {e}")))?;
        if !status.success() {
            let _ = std::fs::remove_file(&file);
            return Err(DatasetError::Fetch(format!("curl {url} exited with {status}")));
        }
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::io::Write;

    #[test]
    fn competitive_lines() {
        assert_eq!(value_lines(&json!([1, 2, 3])), ["3", "1 2 3"]);
        assert_eq!(value_lines(&json!([])), ["0", ""]);
        assert_eq!(value_lines(&json!("Fizz")), ["Fizz"]);
        assert_eq!(value_lines(&json!(2.0)), ["2.0"]);
        assert_eq!(value_lines(&json!(false)), ["False"]);
        assert_eq!(value_lines(&json!("a\nb")), ["a", "b"]);
    }

    fn write_rows(path: &Path, rows: impl Iterator<Item = Value>) {
        let mut f = File::create(path).unwrap();
        for r in rows {
            writeln!(f, "{r}").unwrap();
        }
    }

    fn fixture(edges: usize, randoms: usize) -> tempfile::TempDir {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("datasets/fizz-buzz");
        std::fs::create_dir_all(&dir).unwrap();
        write_rows(&dir.join("fizz-buzz-edge.json"), (0..edges).map(|i| json!({"input1": i, "output1": format!("e{i}")})));
        write_rows(
            &dir.join("fizz-buzz-random.json"),
            (0..randoms).map(|i| json!({"input1": 1000 + i, "output1": format!("r{i}")})),
        );
        std::fs::write(dir.join("description.txt"), "Fizz or buzz.\n").unwrap();
        root
    }

    #[test]
    fn edge_first_then_random() {
        let root = fixture(3, 100);
        let opts = Psb2Options {
            n_validation: 10,
            n_test: 20,
            ..Psb2Options::default()
        };
        let p = load_psb2(root.path(), "fizz-buzz", &opts).unwrap();
        assert_eq!(p.validation_cases.len(), 10);
        assert_eq!(p.test_cases.len(), 20);
        assert_eq!(p.prompt_cases.len(), 5);
        assert_eq!(p.description, "Fizz or buzz.");
        let origins: Vec<CaseOrigin> = p.validation_cases.iter().map(|c| c.origin()).collect();
        assert_eq!(&origins[..3], &[CaseOrigin::Edge; 3]);
        assert!(origins[3..].iter().all(|o| *o == CaseOrigin::Random));
        for c in &p.test_cases {
            assert!(!p.validation_cases.contains(c));
        }
    }

    #[test]
    fn too_few_random_rows() {
        let root = fixture(3, 10);
        let opts = Psb2Options {
            n_validation: 5,
            n_test: 9,
            ..Psb2Options::default()
        };
        assert!(matches!(
            load_psb2(root.path(), "fizz-buzz", &opts),
            Err(DatasetError::Insufficient { needed: 11, available: 10, .. })
        ));
    }

    #[test]
    fn missing_problem_and_description() {
        let root = fixture(3, 10);
        assert!(matches!(
            load_psb2(root.path(), "gcd", &Psb2Options::default()),
            Err(DatasetError::MissingProblem(_))
        ));
        std::fs::remove_file(root.path().join("datasets/fizz-buzz/description.txt")).unwrap();
        let opts = Psb2Options {
            n_validation: 2,
            n_test: 2,
            ..Psb2Options::default()
        };
        assert!(matches!(
            load_psb2(root.path(), "fizz-buzz", &opts),
            Err(DatasetError::MissingDescription(_))
        ));
        std::fs::write(root.path().join("descriptions.json"), r#"{"fizz-buzz": "From index."}"#).unwrap();
        assert_eq!(load_psb2(root.path(), "fizz-buzz", &opts).unwrap().description, "From index.");
    }

    #[test]
    fn malformed_row_reports_index() {
        let root = fixture(3, 10);
        let edge = root.path().join("datasets/fizz-buzz/fizz-buzz-edge.json");
        std::fs::write(&edge, "{\"input1\": 1, \"output1\": 2}\nnot json\n").unwrap();
        let opts = Psb2Options {
            n_validation: 2,
            n_test: 2,
            ..Psb2Options::default()
        };
        assert!(matches!(
            load_psb2(root.path(), "fizz-buzz", &opts),
            Err(DatasetError::Malformed { index: 1, .. })
        ));
    }
}
