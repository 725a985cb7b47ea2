//! Splits an aggregate test function into one self-contained assertion case
//! per top-level assertion statement.
//!
//! Statements of the test body that do not assert (setup such as variable
//! definitions) are replicated into every later case. A compound statement
//! (loop, branch) that contains an assertion stays whole and forms one case.

use thiserror::Error;

use crate::scan::{contains_word, cpp_code_mask, cpp_statements, find_cpp_main, find_word, python_logical_lines};
use crate::types::{Language, TestCase};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("test source is empty")]
    Empty,
    #[error("no `{0}` test function found")]
    NoTestFunction(&'static str),
    #[error("test function never called")]
    NoCall,
    #[error("no assertion found in the test function")]
    NoAssertion,
}

/// One case per top-level assertion of the aggregate test in `source`.
pub fn split_tests(source: &str, language: Language) -> Result<Vec<TestCase>, SplitError> {
    if source.trim().is_empty() {
        return Err(SplitError::Empty);
    }
    let snippets = match language {
        Language::Python => split_python(source)?,
        Language::Cpp => split_cpp(source)?,
    };
    Ok(snippets
        .into_iter()
        .map(|s| TestCase::assertion(s).expect("snippet contains an assertion"))
        .collect())
}

fn is_check_def(code: &str) -> bool {
    let t = code.trim_start();
    t.starts_with("def check(") || t.starts_with("def check (")
}

fn is_check_call(code: &str) -> bool {
    let t = code.trim_start();
    t.starts_with("check(") || t.starts_with("check (")
}

fn split_python(source: &str) -> Result<Vec<String>, SplitError> {
    let lines = python_logical_lines(source);
    let def = lines
        .iter()
        .position(|l| l.indent == 0 && is_check_def(&l.code))
        .ok_or(SplitError::NoTestFunction("check"))?;
    let body_end = lines[def + 1..]
        .iter()
        .position(|l| l.indent == 0 && !l.is_blank())
        .map_or(lines.len(), |p| def + 1 + p);

    let mut prologue = Vec::new();
    let mut calls = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        if (def..body_end).contains(&i) {
            continue;
        }
        if l.indent == 0 && is_check_call(&l.code) {
            calls.push(l.text.as_str());
        } else if !(i > body_end && l.is_blank()) {
            prologue.push(l.text.as_str());
        }
    }
    if calls.is_empty() {
        return Err(SplitError::NoCall);
    }

    let body: Vec<_> = lines[def + 1..body_end].iter().filter(|l| !l.is_blank()).collect();
    let base_indent = body.first().map(|l| l.indent).ok_or(SplitError::NoAssertion)?;
    let mut statements: Vec<(String, bool)> = Vec::new();
    for l in body {
        if l.indent <= base_indent || statements.is_empty() {
            statements.push((l.text.clone(), contains_word(&l.code, "assert")));
        } else {
            let last = statements.last_mut().expect("non-empty");
            last.0.push('\n');
            last.0.push_str(&l.text);
            last.1 |= contains_word(&l.code, "assert");
        }
    }

    let head = format!("{}\n{}", prologue.join("\n").trim_end(), lines[def].text);
    let tail = calls.join("\n");
    let mut setup: Vec<&str> = Vec::new();
    let mut out = Vec::new();
    for (text, asserts) in &statements {
        if *asserts {
            let mut body = setup.clone();
            body.push(text);
            out.push(format!("{}\n{}\n\n{}\n", head.trim_start(), body.join("\n"), tail));
        } else {
            setup.push(text);
        }
    }
    if out.is_empty() {
        return Err(SplitError::NoAssertion);
    }
    Ok(out)
}

fn split_cpp(source: &str) -> Result<Vec<String>, SplitError> {
    let span = find_cpp_main(source).ok_or(SplitError::NoTestFunction("main"))?;
    let prologue = format!("{}{}", &source[..span.start], &source[span.end..]);
    let body = &source[span.open + 1..span.end - 1];
    let mut setup: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for stmt in cpp_statements(body) {
        let mask = cpp_code_mask(&stmt);
        if !find_word(&stmt, &mask, "assert").is_empty() {
            let mut lines = setup.clone();
            lines.push(stmt);
            out.push(format!("{}\nint main(){{\n{}\n}}\n", prologue.trim_end(), lines.join("\n")));
        } else if !stmt.trim_start().starts_with("return") {
            setup.push(stmt);
        }
    }
    if out.is_empty() {
        return Err(SplitError::NoAssertion);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PY: &str = r#"

METADATA = {'author': 'x'}


def check(candidate):
    data = [1, 2,
            3]
    assert candidate(data) == 6
    assert candidate([]) == 0, "empty"
    for x in range(3):
        assert candidate([x]) == x
    assert True

check(total)
"#;

    #[test]
    fn python_top_level_assertions() {
        let cases = split_tests(PY, Language::Python).unwrap();
        assert_eq!(cases.len(), 4);
        let first = cases[0].snippet().unwrap();
        assert!(first.starts_with("METADATA = {'author': 'x'}\n"));
        assert!(first.contains("def check(candidate):\n    data = [1, 2,\n            3]\n    assert candidate(data) == 6\n"));
        assert!(first.ends_with("\ncheck(total)\n"));
        let loop_case = cases[2].snippet().unwrap();
        assert!(loop_case.contains("    for x in range(3):\n        assert candidate([x]) == x"));
        // Setup replicated, earlier assertions not.
        assert!(loop_case.contains("data = [1, 2,"));
        assert!(!loop_case.contains("candidate(data) == 6"));
    }

    #[test]
    fn python_snippets_run() {
        let cases = split_tests(PY, Language::Python).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (i, c) in cases.iter().enumerate() {
            let program = format!("def total(v):\n    return sum(v)\n\n{}", c.snippet().unwrap());
            let path = dir.path().join(format!("t{i}.py"));
            std::fs::write(&path, program).unwrap();
            let status = std::process::Command::new("python3").arg(&path).status().unwrap();
            assert!(status.success(), "case {i}");
        }
    }

    #[test]
    fn python_errors() {
        assert_eq!(split_tests("", Language::Python), Err(SplitError::Empty));
        assert_eq!(
            split_tests("def check(candidate):\n    pass\n\ncheck(f)\n", Language::Python),
            Err(SplitError::NoAssertion)
        );
        assert_eq!(
            split_tests("def check(candidate):\n    assert candidate()\n", Language::Python),
            Err(SplitError::NoCall)
        );
        assert_eq!(split_tests("x = 1\n", Language::Python), Err(SplitError::NoTestFunction("check")));
    }

    const CPP: &str = r#"#undef NDEBUG
#include<assert.h>
int main(){
    vector<int> v = {1, 2};
    assert (f(v) == 3);
    assert (f({}) == 0);
    for (int i = 0; i < 3; i++)
    {
        assert (f({i}) == i);
    }
}
"#;

    #[test]
    fn cpp_top_level_assertions() {
        let cases = split_tests(CPP, Language::Cpp).unwrap();
        assert_eq!(cases.len(), 3);
        let s = cases[1].snippet().unwrap();
        assert!(s.starts_with("#undef NDEBUG\n#include<assert.h>\nint main(){\n"));
        assert!(s.contains("vector<int> v = {1, 2};"));
        assert!(s.contains("assert (f({}) == 0);"));
        assert!(!s.contains("f(v) == 3"));
        assert!(cases[2].snippet().unwrap().contains("for (int i = 0; i < 3; i++)"));
    }

    #[test]
    fn cpp_without_assertions() {
        assert_eq!(split_tests("int main(){ return 0; }", Language::Cpp), Err(SplitError::NoAssertion));
    }
}
