use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use repairloop::llm::Fixture;
use repairloop::runlog::{read_log, Clock, LogRecord, LogWriter, RunStatus};
use repairloop::{
    solve, Arity, Backends, InstructMode, Language, Problem, Sandbox, ScriptedBackend, SearchConfig, SearchContext,
    Selection, Templates, TestCase, Toolchain,
};

fn problem() -> Problem {
    Problem {
        id: "double".into(),
        name: "double".into(),
        description: "Print twice the input integer.".into(),
        language: Language::Python,
        prompt_cases: vec![TestCase::io(["2"], ["4"])],
        validation_cases: vec![TestCase::io(["2"], ["4"]), TestCase::io(["0"], ["0"])],
        test_cases: vec![],
    }
}

fn never_correct() -> Backends {
    // Scores 0.5: right on the zero case only.
    let fixture = Fixture {
        synth: vec!["print(0)".into()],
        explain: vec!["Multiply by two.".into()],
        debug: vec!["print(0)".into()],
        ..Fixture::default()
    };
    Backends::uniform(Arc::new(ScriptedBackend::new(fixture)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generation_sizes_and_ids(
        w in 1usize..4,
        n_draft in 1usize..5,
        n_explain in 1usize..3,
        n_debug in 1usize..4,
        m in 1usize..16,
        lexicase in any::<bool>(),
        static_mode in any::<bool>(),
    ) {
        prop_assume!(n_draft <= m);
        let config = SearchConfig {
            beam_width: Arity::Finite(w),
            n_draft: Arity::Finite(n_draft),
            n_explain,
            n_debug,
            max_programs: m,
            selection: if lexicase { Selection::Lexicase } else { Selection::Tournament },
            instruct: if static_mode { InstructMode::Static } else { InstructMode::Llm },
            ..SearchConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let log = LogWriter::create(&path, Clock::logical()).unwrap();
        let sandbox = Sandbox::new(Toolchain::default()).unwrap().with_workers(2).unwrap();
        let templates = Templates::default();
        let ctx = SearchContext { sandbox: &sandbox, templates: &templates, log: &log, dataset: None };
        let result = solve(&problem(), &config, &never_correct(), &ctx, 0).unwrap();

        prop_assert!(!result.solved);
        prop_assert_eq!(result.programs_generated as usize, m);

        let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
        for c in &result.candidates {
            *sizes.entry(c.generation).or_default() += 1;
        }
        let mut left = m;
        for (g, size) in sizes {
            let planned = if g == 0 { n_draft } else { w.min(result.candidates.iter().filter(|c| c.generation == g - 1).count()) * n_explain * n_debug };
            prop_assert_eq!(size, planned.min(left), "generation {}", g);
            left -= size;
        }

        let records = read_log(&path).unwrap();
        let ids: Vec<u64> = records.iter().filter_map(|r| match r {
            LogRecord::Candidate(c) => Some(c.candidate_id),
            _ => None,
        }).collect();
        prop_assert_eq!(ids, (0..m as u64).collect::<Vec<_>>());
        match records.last() {
            Some(LogRecord::Result(r)) => {
                prop_assert_eq!(r.status, RunStatus::Completed);
                prop_assert_eq!(r.programs_generated as usize, m);
                prop_assert_eq!(r.best_avg_score, Some(0.5));
            }
            other => prop_assert!(false, "last record {:?}", other),
        }
    }
}

#[test]
fn repeat_is_deterministic_with_scripted_backend() {
    let config = SearchConfig {
        beam_width: Arity::Finite(2),
        n_draft: Arity::Finite(3),
        n_explain: 2,
        n_debug: 2,
        max_programs: 12,
        selection: Selection::Lexicase,
        ..SearchConfig::default()
    };
    let sandbox = Sandbox::new(Toolchain::default()).unwrap();
    let templates = Templates::default();
    let mut parents = Vec::new();
    for _ in 0..2 {
        let log = LogWriter::discard(Clock::logical());
        let ctx = SearchContext { sandbox: &sandbox, templates: &templates, log: &log, dataset: None };
        let result = solve(&problem(), &config, &never_correct(), &ctx, 0).unwrap();
        parents.push(result.candidates.iter().map(|c| c.parent_id).collect::<Vec<_>>());
    }
    assert_eq!(parents[0], parents[1]);
}
