//! Turn the first failing test of a candidate into repair instructions, either
//! from a fixed template or by asking the explain model for a bug summary.

use thiserror::Error;

use crate::config::InstructMode;
use crate::execute::ExecutionOutcome;
use crate::llm::{generate_prefix, BackendError, ModelBackend, ModelRequest, Role};
use crate::template::{Slots, TemplateError, Templates};
use crate::types::{CaseBody, Problem, TestCase};

/// Byte cap applied to stderr and program output quoted in instructions.
pub const INSTRUCTION_BYTE_CAP: usize = 2000;
const ELLIPSIS: &str = "...";
/// Joins multi-line inputs and outputs inside one instruction.
pub const LINE_JOINER: &str = "\\n";

#[derive(Debug, Error)]
pub enum InstructError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A failing case together with what the candidate did on it.
#[derive(Debug, Clone, Copy)]
pub struct Failure<'a> {
    pub index: usize,
    pub case: &'a TestCase,
    pub outcome: &'a ExecutionOutcome,
}

/// Lowest-index case whose score is below 1.
pub fn first_failing<'a>(
    scores: &[f64],
    cases: &'a [TestCase],
    outcomes: &'a [ExecutionOutcome],
) -> Option<Failure<'a>> {
    let index = scores.iter().position(|&s| s < 1.0)?;
    Some(Failure {
        index,
        case: cases.get(index)?,
        outcome: outcomes.get(index)?,
    })
}

/// Cuts `text` to at most `cap` bytes (on a char boundary), ending in `...`
/// when anything was removed.
pub fn truncate_to_cap(text: &str, cap: usize) -> String {
    if text.len() <= cap {
        return text.to_owned();
    }
    let mut end = cap.saturating_sub(ELLIPSIS.len());
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}{ELLIPSIS}", &text[..end])
}

fn case_input(case: &TestCase) -> String {
    match case.body() {
        CaseBody::IoPair { input_lines, .. } => input_lines.join(LINE_JOINER),
        CaseBody::Assertion { snippet } => snippet.trim().to_owned(),
    }
}

fn case_expected(case: &TestCase) -> String {
    match case.body() {
        CaseBody::IoPair {
            expected_output_lines, ..
        } => expected_output_lines.join(LINE_JOINER),
        CaseBody::Assertion { .. } => "passes".to_owned(),
    }
}

fn actual_output(outcome: &ExecutionOutcome) -> String {
    truncate_to_cap(&outcome.stdout_lines.join(LINE_JOINER), INSTRUCTION_BYTE_CAP)
}

fn stderr_text(outcome: &ExecutionOutcome) -> String {
    truncate_to_cap(outcome.stderr.trim_end(), INSTRUCTION_BYTE_CAP)
}

/// Template instruction: `Fix {stderr}` when stderr is non-empty, otherwise
/// `Make sure that {input} -> {expected_output}`.
pub fn static_instruction(failure: &Failure<'_>, templates: &Templates) -> Result<String, TemplateError> {
    if !failure.outcome.stderr.is_empty() {
        templates
            .static_stderr
            .render(&Slots::new().set("stderr", stderr_text(failure.outcome)))
    } else {
        templates.static_io.render(
            &Slots::new()
                .set("input", case_input(failure.case))
                .set("expected_output", case_expected(failure.case)),
        )
    }
}

/// The `{issue}` clause of the explain prompt: stderr when present, otherwise
/// the expected-versus-actual sentence.
pub fn issue_text(failure: &Failure<'_>, templates: &Templates) -> Result<String, TemplateError> {
    if !failure.outcome.stderr.is_empty() {
        return Ok(stderr_text(failure.outcome));
    }
    templates.io_issue.render(
        &Slots::new()
            .set("input", case_input(failure.case))
            .set("expected_output", case_expected(failure.case))
            .set("output", actual_output(failure.outcome)),
    )
}

pub fn render_explain_prompt(
    problem: &Problem,
    source: &str,
    failure: &Failure<'_>,
    templates: &Templates,
) -> Result<(String, String), TemplateError> {
    let system = templates.system_message(problem.language)?;
    let slots = Slots::new()
        .set("language", problem.language.display_name())
        .set("problem_name", &problem.name)
        .set("problem_description", &problem.description)
        .set("program_candidate", source)
        .set("issue", issue_text(failure, templates)?);
    Ok((system, templates.explain.render(&slots)?))
}

/// Samples bug summaries from the explain model on the spring schedule over
/// `n_explain`, issuing only the first `take`. Empty completions are replaced
/// by the static instruction.
pub fn llm_instructions(
    problem: &Problem,
    source: &str,
    failure: &Failure<'_>,
    n_explain: usize,
    take: usize,
    backend: &dyn ModelBackend,
    templates: &Templates,
) -> Result<Vec<String>, InstructError> {
    let (system, user) = render_explain_prompt(problem, source, failure, templates)?;
    let request = ModelRequest::new(Role::Explain, system, user);
    let responses = generate_prefix(&request, n_explain, take, backend)?;
    let fallback = static_instruction(failure, templates)?;
    Ok(responses
        .into_iter()
        .map(|r| {
            let text = r.text.trim();
            if text.is_empty() {
                fallback.clone()
            } else {
                text.to_owned()
            }
        })
        .collect())
}

/// `take` (at most `n_explain`) instructions for one failing candidate under
/// the configured mode. The static mode repeats its single instruction.
#[allow(clippy::too_many_arguments)]
pub fn instructions(
    mode: InstructMode,
    problem: &Problem,
    source: &str,
    failure: &Failure<'_>,
    n_explain: usize,
    take: usize,
    backend: &dyn ModelBackend,
    templates: &Templates,
) -> Result<Vec<String>, InstructError> {
    let take = take.min(n_explain);
    match mode {
        InstructMode::Static => Ok(vec![static_instruction(failure, templates)?; take]),
        InstructMode::Llm => llm_instructions(problem, source, failure, n_explain, take, backend, templates),
    }
}
