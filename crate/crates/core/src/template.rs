//! `{slot}` prompt templates and the default prompt set.
//!
//! A placeholder is `{name}` where `name` is `[a-z_][a-z0-9_]*`. `{{` and
//! `}}` render as literal braces; any other brace is copied verbatim.
//! Substituted values are never re-scanned, so code containing braces is
//! safe to inject.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::types::Language;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template references slot {{{0}}} but no value was supplied")]
    MissingSlot(String),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn new(text: &str) -> Self {
        Self {
            pieces: parse(text),
        }
    }

    /// Slot names referenced by the template, in order of first use.
    pub fn slots(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for piece in &self.pieces {
            if let Piece::Slot(name) = piece {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
        }
        out
    }

    pub fn render(&self, values: &Slots) -> Result<String, TemplateError> {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = values
                        .get(name)
                        .ok_or_else(|| TemplateError::MissingSlot(name.clone()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

fn is_slot_start(c: char) -> bool {
    c.is_ascii_lowercase() || c == '_'
}

fn is_slot_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

fn parse(text: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '{' && chars.get(i + 1) == Some(&'{') {
            literal.push('{');
            i += 2;
            continue;
        }
        if c == '}' && chars.get(i + 1) == Some(&'}') {
            literal.push('}');
            i += 2;
            continue;
        }
        if c == '{' && chars.get(i + 1).copied().is_some_and(is_slot_start) {
            let mut j = i + 1;
            while j < chars.len() && is_slot_char(chars[j]) {
                j += 1;
            }
            if chars.get(j) == Some(&'}') {
                if !literal.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Slot(chars[i + 1..j].iter().collect()));
                i = j + 1;
                continue;
            }
        }
        literal.push(c);
        i += 1;
    }
    if !literal.is_empty() {
        pieces.push(Piece::Text(literal));
    }
    pieces
}

/// Values for template slots.
#[derive(Debug, Clone, Default)]
pub struct Slots(HashMap<String, String>);

impl Slots {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_owned(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

pub const SYSTEM_PROMPT: &str = "You are an experienced software developer.\n\
You write concise code in {language}.\n\
The code must read input from user and return output corresponding to the task description.";

pub const DRAFT_PROMPT: &str = "Solve the following code contest problem: {problem_name}.\n\
Problem description: {problem_description}.\n\
{program_template}\n\
Only complete the code, do not add triple quotes, do not give explanations.";

pub const EXPLAIN_PROMPT: &str = "I'm trying to solve the following code contest problem: {problem_name}.\n\
Problem description: {problem_description}.\n\
Currently, the code is\n\
```\n\
{program_candidate}\n\
```\n\
The issue is {issue}.\n\
Describe how I should fix the code in a very concise manner.";

pub const DEBUG_PROMPT: &str = "Solve the following code contest problem: {problem_name}.\n\
Problem description: {problem_description}.\n\
Currently, the code is\n\
```\n\
{program_candidate}\n\
```\n\
Modify the code as {bug_summary}.\n\
You must only return correct code.\n\
Remove any triple quotes, language name or explanations.";

pub const STATIC_IO_INSTRUCTION: &str = "Make sure that {input} -> {expected_output}";
pub const STATIC_STDERR_INSTRUCTION: &str = "Fix {stderr}";
pub const IO_ISSUE: &str = "it must return {expected_output} for input {input}, but it returns {output}";

pub const PYTHON_PREAMBLE: &str = "";
pub const CPP_PREAMBLE: &str = "#include <bits/stdc++.h>\nusing namespace std;";

/// The full prompt set used by the loop. Any entry can be overridden from a
/// directory of text files (see [`Templates::load_dir`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub system: PromptTemplate,
    pub draft: PromptTemplate,
    pub explain: PromptTemplate,
    pub debug: PromptTemplate,
    pub static_io: PromptTemplate,
    pub static_stderr: PromptTemplate,
    pub io_issue: PromptTemplate,
    pub python_preamble: String,
    pub cpp_preamble: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            system: PromptTemplate::new(SYSTEM_PROMPT),
            draft: PromptTemplate::new(DRAFT_PROMPT),
            explain: PromptTemplate::new(EXPLAIN_PROMPT),
            debug: PromptTemplate::new(DEBUG_PROMPT),
            static_io: PromptTemplate::new(STATIC_IO_INSTRUCTION),
            static_stderr: PromptTemplate::new(STATIC_STDERR_INSTRUCTION),
            io_issue: PromptTemplate::new(IO_ISSUE),
            python_preamble: PYTHON_PREAMBLE.to_owned(),
            cpp_preamble: CPP_PREAMBLE.to_owned(),
        }
    }
}

impl Templates {
    /// Starts from the defaults and replaces every entry whose file exists in
    /// `dir`: `system.txt`, `draft.txt`, `explain.txt`, `debug.txt`,
    /// `static_io.txt`, `static_stderr.txt`, `io_issue.txt`,
    /// `preamble_python.txt`, `preamble_cpp.txt`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let read = |name: &str| -> Result<Option<String>, TemplateError> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(None);
            }
            std::fs::read_to_string(&path)
                .map(|s| Some(s.trim_end_matches('\n').to_owned()))
                .map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })
        };
        let mut t = Templates::default();
        let slots: [(&str, &mut PromptTemplate); 7] = [
            ("system.txt", &mut t.system),
            ("draft.txt", &mut t.draft),
            ("explain.txt", &mut t.explain),
            ("debug.txt", &mut t.debug),
            ("static_io.txt", &mut t.static_io),
            ("static_stderr.txt", &mut t.static_stderr),
            ("io_issue.txt", &mut t.io_issue),
        ];
        for (file, template) in slots {
            if let Some(text) = read(file)? {
                *template = PromptTemplate::new(&text);
            }
        }
        if let Some(text) = read("preamble_python.txt")? {
            t.python_preamble = text;
        }
        if let Some(text) = read("preamble_cpp.txt")? {
            t.cpp_preamble = text;
        }
        Ok(t)
    }

    pub fn preamble(&self, language: Language) -> &str {
        match language {
            Language::Python => &self.python_preamble,
            Language::Cpp => &self.cpp_preamble,
        }
    }

    pub fn system_message(&self, language: Language) -> Result<String, TemplateError> {
        self.system
            .render(&Slots::new().set("language", language.display_name()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_slots_once() {
        let t = PromptTemplate::new("a {x} b {y} {x}");
        let out = t.render(&Slots::new().set("x", "{y}").set("y", "2")).unwrap();
        assert_eq!(out, "a {y} b 2 {y}");
        assert_eq!(t.slots(), ["x", "y"]);
    }

    #[test]
    fn missing_slot_is_an_error() {
        let t = PromptTemplate::new("Problem description: {problem_description}.");
        match t.render(&Slots::new()) {
            Err(TemplateError::MissingSlot(name)) => assert_eq!(name, "problem_description"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_slot_braces_are_literal() {
        let t = PromptTemplate::new("int main() { return {0}; } {{x}} {A}");
        assert_eq!(t.render(&Slots::new()).unwrap(), "int main() { return {0}; } {x} {A}");
        assert!(t.slots().is_empty());
    }

    #[test]
    fn system_prompt_substitutes_language() {
        let t = Templates::default();
        let msg = t.system_message(Language::Cpp).unwrap();
        assert!(msg.contains("You write concise code in C++."));
        assert!(msg.starts_with("You are an experienced software developer.\n"));
    }

    #[test]
    fn load_dir_overrides_present_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("static_stderr.txt"), "Please fix {stderr}\n").unwrap();
        std::fs::write(dir.path().join("preamble_python.txt"), "import sys\n").unwrap();
        let t = Templates::load_dir(dir.path()).unwrap();
        assert_eq!(
            t.static_stderr.render(&Slots::new().set("stderr", "E")).unwrap(),
            "Please fix E"
        );
        assert_eq!(t.python_preamble, "import sys");
        assert_eq!(t.draft, PromptTemplate::new(DRAFT_PROMPT));
    }
}
