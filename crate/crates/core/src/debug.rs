//! Repair a parent program under one instruction by sampling the debug model.

use thiserror::Error;

use crate::llm::{generate_prefix, BackendError, ModelBackend, ModelRequest, Role};
use crate::synthesize::extract_code;
use crate::template::{Slots, TemplateError, Templates};
use crate::types::{Candidate, IdSequence, Problem};

#[derive(Debug, Error)]
pub enum DebugError {
    #[error("repair instruction is empty")]
    EmptyInstruction,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub fn render_debug_prompt(
    problem: &Problem,
    parent_source: &str,
    instruction: &str,
    templates: &Templates,
) -> Result<(String, String), TemplateError> {
    let system = templates.system_message(problem.language)?;
    let slots = Slots::new()
        .set("language", problem.language.display_name())
        .set("problem_name", &problem.name)
        .set("problem_description", &problem.description)
        .set("program_candidate", parent_source)
        .set("bug_summary", instruction);
    Ok((system, templates.debug.render(&slots)?))
}

/// Samples repairs of `parent` on the spring schedule over `n_debug`, issuing
/// only the first `take` requests. Children get fresh ids from `ids` in
/// schedule order.
#[allow(clippy::too_many_arguments)]
pub fn repair(
    problem: &Problem,
    parent: &Candidate,
    instruction: &str,
    n_debug: usize,
    take: usize,
    backend: &dyn ModelBackend,
    templates: &Templates,
    ids: &mut IdSequence,
) -> Result<Vec<Candidate>, DebugError> {
    if instruction.trim().is_empty() {
        return Err(DebugError::EmptyInstruction);
    }
    let (system, user) = render_debug_prompt(problem, &parent.source, instruction, templates)?;
    let request = ModelRequest::new(Role::Debug, system, user);
    let responses = generate_prefix(&request, n_debug, take, backend)?;
    Ok(responses
        .into_iter()
        .zip(&request_temperatures(n_debug))
        .map(|(response, &temperature)| {
            Candidate::repair(
                ids.next_id(),
                parent,
                extract_code(&response.text, problem.language),
                temperature,
                instruction.to_owned(),
            )
        })
        .collect())
}

fn request_temperatures(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Fixture, ScriptedBackend};
    use crate::types::{CandidateOrigin, Language, TestCase};

    fn problem() -> Problem {
        Problem {
            id: "echo".into(),
            name: "echo".into(),
            description: "Print the input".into(),
            language: Language::Python,
            prompt_cases: vec![],
            validation_cases: vec![TestCase::io(["x"], ["x"])],
            test_cases: vec![],
        }
    }

    fn parent() -> Candidate {
        let mut p = Candidate::draft(0, "print(1)".into(), 0.0);
        p.record_scores(vec![0.0]);
        p
    }

    #[test]
    fn prompt_text() {
        let (_, user) = render_debug_prompt(&problem(), "print(1)", "print the input", &Templates::default()).unwrap();
        assert!(user.contains("```\nprint(1)\n```"));
        assert!(user.contains("Modify the code as print the input.\nYou must only return correct code."));
    }

    #[test]
    fn children_follow_schedule() {
        let backend = ScriptedBackend::new(Fixture {
            debug: (0..4).map(|i| format!("print({i})")).collect(),
            ..Fixture::default()
        });
        let mut ids = IdSequence::new();
        ids.next_id();
        let kids = repair(&problem(), &parent(), "fix it", 4, 4, &backend, &Templates::default(), &mut ids).unwrap();
        let temps: Vec<f64> = kids.iter().map(|k| k.temperature).collect();
        assert_eq!(temps, [0.0, 0.25, 0.5, 0.75]);
        for (i, k) in kids.iter().enumerate() {
            assert_eq!(k.id, i as u64 + 1);
            assert_eq!(k.parent_id, Some(0));
            assert_eq!(k.generation, 1);
            assert_eq!(k.origin, CandidateOrigin::Repair);
            assert_eq!(k.instruction.as_deref(), Some("fix it"));
        }
    }

    #[test]
    fn identical_child_is_kept() {
        let backend = ScriptedBackend::new(Fixture {
            debug: vec!["print(1)".into()],
            ..Fixture::default()
        });
        let kids = repair(&problem(), &parent(), "fix", 1, 1, &backend, &Templates::default(), &mut IdSequence::new())
            .unwrap();
        assert_eq!(kids.len(), 1);
        assert_eq!(kids[0].source, parent().source);
        assert_eq!(kids[0].temperature, 0.0);
    }

    #[test]
    fn empty_instruction_rejected() {
        let backend = ScriptedBackend::new(Fixture::default());
        let r = repair(&problem(), &parent(), " ", 1, 1, &backend, &Templates::default(), &mut IdSequence::new());
        assert!(matches!(r, Err(DebugError::EmptyInstruction)));
    }
}
