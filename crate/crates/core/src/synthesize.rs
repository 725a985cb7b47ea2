//! Draft generation: render the draft prompt, sample `N_draft` programs, and
//! pull clean source out of each completion.

use thiserror::Error;

use crate::config::SearchConfig;
use crate::llm::{generate_prefix, BackendError, ModelBackend, ModelRequest, Role};
use crate::template::{Slots, TemplateError, Templates};
use crate::types::{Candidate, CaseBody, IdSequence, Language, Problem, TestCase};

/// At most this many prompt cases are shown to the draft model.
pub const PROMPT_CASE_LIMIT: usize = 5;

#[derive(Debug, Error)]
pub enum SynthesizeError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Language preamble followed by up to five prompt cases as comments.
pub fn program_template(problem: &Problem, templates: &Templates) -> String {
    let prefix = problem.language.comment_prefix();
    let mut out = String::new();
    let preamble = templates.preamble(problem.language);
    if !preamble.is_empty() {
        out.push_str(preamble);
        out.push('\n');
    }
    for case in problem.prompt_cases.iter().take(PROMPT_CASE_LIMIT) {
        for line in example_lines(case) {
            out.push_str(prefix);
            if !line.is_empty() {
                out.push(' ');
                out.push_str(&line);
            }
            out.push('\n');
        }
    }
    out.trim_end_matches('\n').to_owned()
}

fn example_lines(case: &TestCase) -> Vec<String> {
    match case.body() {
        CaseBody::IoPair {
            input_lines,
            expected_output_lines,
        } => {
            let mut lines = vec!["input:".to_owned()];
            lines.extend(input_lines.iter().cloned());
            lines.push("output:".to_owned());
            lines.extend(expected_output_lines.iter().cloned());
            lines
        }
        CaseBody::Assertion { snippet } => {
            let asserts: Vec<String> = snippet
                .lines()
                .filter(|l| l.contains("assert"))
                .map(|l| l.trim().to_owned())
                .collect();
            if asserts.is_empty() {
                snippet.lines().map(str::to_owned).collect()
            } else {
                asserts
            }
        }
    }
}

/// Returns `(system_message, user_message)` for the draft model.
pub fn render_draft_prompt(problem: &Problem, templates: &Templates) -> Result<(String, String), TemplateError> {
    let system = templates.system_message(problem.language)?;
    let slots = Slots::new()
        .set("language", problem.language.display_name())
        .set("problem_name", &problem.name)
        .set("problem_description", &problem.description)
        .set("program_template", program_template(problem, templates));
    let user = templates.draft.render(&slots)?;
    Ok((system, user))
}

/// Samples `min(N_draft, M)` drafts on the spring schedule over `N_draft`.
pub fn synthesize_drafts(
    problem: &Problem,
    config: &SearchConfig,
    backend: &dyn ModelBackend,
    templates: &Templates,
    ids: &mut IdSequence,
) -> Result<Vec<Candidate>, SynthesizeError> {
    let n = config.n_draft();
    let take = n.min(config.max_programs);
    let (system, user) = render_draft_prompt(problem, templates)?;
    let request = ModelRequest::new(Role::Synth, system, user);
    let responses = generate_prefix(&request, n, take, backend)?;
    Ok(responses
        .into_iter()
        .enumerate()
        .map(|(i, response)| {
            let temperature = (i as f64) / (n as f64);
            Candidate::draft(ids.next_id(), extract_code(&response.text, problem.language), temperature)
        })
        .collect())
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn fence_tag(line: &str) -> String {
    line.trim().trim_start_matches('`').trim().to_ascii_lowercase()
}

fn tag_matches(tag: &str, language: Language) -> bool {
    match language {
        Language::Python => matches!(tag, "python" | "py" | "python3"),
        Language::Cpp => matches!(tag, "cpp" | "c++" | "cxx" | "cc"),
    }
}

/// Strips markdown code fences from a completion.
///
/// Without a fence line the text is returned unchanged. Otherwise the body of
/// the first fenced block is returned (the block tagged with `language` wins
/// when several exist), dropping the fence lines, the language tag, and any
/// prose outside the block. An unclosed fence runs to the end of the text.
/// The result never contains a fence line, so extraction is idempotent.
pub fn extract_code(raw: &str, language: Language) -> String {
    let lines: Vec<&str> = raw.lines().collect();
    let fences: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| is_fence(l))
        .map(|(i, _)| i)
        .collect();
    if fences.is_empty() {
        return raw.to_owned();
    }
    let blocks: Vec<(usize, Option<usize>)> = fences
        .chunks(2)
        .map(|pair| (pair[0], pair.get(1).copied()))
        .collect();
    let (open, close) = blocks
        .iter()
        .copied()
        .find(|(open, _)| tag_matches(&fence_tag(lines[*open]), language))
        .unwrap_or(blocks[0]);
    let end = close.unwrap_or(lines.len());
    lines[open + 1..end].join("\n")
}
