//! The repair loop: drafts, evaluation, then rounds of selection, instruction,
//! and repair until a candidate passes every validation case or the program
//! budget runs out.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, SearchConfig};
use crate::debug::{repair, DebugError};
use crate::execute::{digest_source, Evaluation, Sandbox, SandboxError};
use crate::instruct::{first_failing, instructions, InstructError};
use crate::llm::{BackendError, ModelBackend};
use crate::metrics::tpr;
use crate::rank::{select, RankError};
use crate::runlog::{
    read_log, run_id, CandidateRecord, ConfigSummary, LogError, LogRecord, LogWriter, ResultRecord, RunStatus,
    SCHEMA_VERSION,
};
use crate::synthesize::{synthesize_drafts, SynthesizeError};
use crate::template::Templates;
use crate::types::{Candidate, IdSequence, Problem, ProblemError};

/// The three model roles. They may share one backend.
#[derive(Clone)]
pub struct Backends {
    pub synth: Arc<dyn ModelBackend>,
    pub explain: Arc<dyn ModelBackend>,
    pub debug: Arc<dyn ModelBackend>,
}

impl Backends {
    pub fn uniform(backend: Arc<dyn ModelBackend>) -> Self {
        Self {
            synth: Arc::clone(&backend),
            explain: Arc::clone(&backend),
            debug: backend,
        }
    }

    /// Identifier used as the model column of reports.
    pub fn model_label(&self) -> String {
        let ids = [self.synth.id(), self.explain.id(), self.debug.id()];
        if ids.iter().all(|id| *id == ids[0]) {
            ids[0].to_owned()
        } else {
            ids.join("+")
        }
    }

    fn begin_run(&self, seed: u64) {
        let mut seen: Vec<*const ()> = Vec::new();
        for b in [&self.synth, &self.explain, &self.debug] {
            let ptr = Arc::as_ptr(b) as *const ();
            if !seen.contains(&ptr) {
                seen.push(ptr);
                b.begin_run(seed);
            }
        }
    }
}

/// Everything a run needs besides the problem and configuration.
pub struct SearchContext<'a> {
    pub sandbox: &'a Sandbox,
    pub templates: &'a Templates,
    pub log: &'a LogWriter,
    /// Dataset label recorded in the terminal record.
    pub dataset: Option<String>,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("repair step: {0}")]
    Debug(String),
}

impl From<SynthesizeError> for SearchError {
    fn from(e: SynthesizeError) -> Self {
        match e {
            SynthesizeError::Template(t) => SearchError::Template(t),
            SynthesizeError::Backend(b) => SearchError::Backend(b),
        }
    }
}

impl From<InstructError> for SearchError {
    fn from(e: InstructError) -> Self {
        match e {
            InstructError::Template(t) => SearchError::Template(t),
            InstructError::Backend(b) => SearchError::Backend(b),
        }
    }
}

impl From<DebugError> for SearchError {
    fn from(e: DebugError) -> Self {
        match e {
            DebugError::Template(t) => SearchError::Template(t),
            DebugError::Backend(b) => SearchError::Backend(b),
            other => SearchError::Debug(other.to_string()),
        }
    }
}

impl SearchError {
    /// True for failures of the environment (model service, toolchain,
    /// sandbox) rather than of the inputs.
    pub fn is_abort(&self) -> bool {
        matches!(self, SearchError::Sandbox(_) | SearchError::Backend(_) | SearchError::Log(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub run_id: String,
    pub problem_id: String,
    pub solved: bool,
    pub solution: Option<Candidate>,
    /// Candidates evaluated and logged (ids `0..programs_generated`).
    pub programs_generated: u64,
    pub epg: Option<u64>,
    /// Pass rate of the solution on the held-out cases.
    pub final_tpr: Option<f64>,
    pub generations: u32,
    pub best_avg_score: Option<f64>,
    pub last_avg_score: Option<f64>,
    pub log_path: Option<PathBuf>,
    /// Every evaluated candidate in id order.
    pub candidates: Vec<Candidate>,
}

struct Run<'a> {
    problem: &'a Problem,
    config: &'a SearchConfig,
    backends: &'a Backends,
    ctx: &'a SearchContext<'a>,
    run_id: String,
    ids: IdSequence,
    history: Vec<Candidate>,
    generations: u32,
}

enum Step {
    Continue,
    Solved(Candidate),
}

impl Run<'_> {
    fn budget_left(&self) -> usize {
        self.config.max_programs.saturating_sub(self.ids.issued() as usize)
    }

    /// Evaluates `candidate` on the validation cases and logs it.
    fn evaluate(&mut self, mut candidate: Candidate) -> Result<(Step, Candidate, Evaluation), SearchError> {
        let created_at = self.ctx.log.now();
        let evaluation = self.ctx.sandbox.evaluate(
            self.problem.language,
            &mut candidate,
            &self.problem.validation_cases,
            &self.config.exec_limits,
        )?;
        self.ctx.log.write(&LogRecord::Candidate(CandidateRecord {
            schema: SCHEMA_VERSION,
            run_id: self.run_id.clone(),
            problem_id: self.problem.id.clone(),
            candidate_id: candidate.id,
            parent_id: candidate.parent_id,
            generation: candidate.generation,
            origin: candidate.origin,
            temperature: candidate.temperature,
            instruction: candidate.instruction.clone(),
            source_digest: digest_source(&candidate.source),
            per_test_scores: evaluation.per_test_scores.clone(),
            avg_score: evaluation.avg_score,
            created_at,
            evaluated_at: self.ctx.log.now(),
        }))?;
        self.history.push(candidate.clone());
        let step = if candidate.is_perfect() {
            Step::Solved(candidate.clone())
        } else {
            Step::Continue
        };
        Ok((step, candidate, evaluation))
    }

    fn search(&mut self) -> Result<Option<Candidate>, SearchError> {
        let config = self.config;
        let problem = self.problem;
        let drafts = synthesize_drafts(
            problem,
            config,
            self.backends.synth.as_ref(),
            self.ctx.templates,
            &mut self.ids,
        )?;
        self.generations = 1;
        let mut current: Vec<(Candidate, Evaluation)> = Vec::with_capacity(drafts.len());
        for draft in drafts {
            let (step, candidate, evaluation) = self.evaluate(draft)?;
            if let Step::Solved(c) = step {
                return Ok(Some(c));
            }
            current.push((candidate, evaluation));
        }

        let n_explain = config.n_explain;
        let n_debug = config.n_debug;
        while self.budget_left() > 0 && !current.is_empty() {
            let generation = self.generations - 1;
            let population: Vec<Candidate> = current.iter().map(|(c, _)| c.clone()).collect();
            let evaluations: HashMap<u64, &Evaluation> = current.iter().map(|(c, e)| (c.id, e)).collect();
            let parents: Vec<Candidate> = select(config.selection, &population, config.beam_width(), config.seed, generation)?
                .into_iter()
                .cloned()
                .collect();
            self.generations += 1;
            let mut next = Vec::new();
            for parent in &parents {
                if self.budget_left() == 0 {
                    break;
                }
                let evaluation = evaluations[&parent.id];
                let failure = first_failing(
                    &evaluation.per_test_scores,
                    &problem.validation_cases,
                    &evaluation.outcomes,
                )
                .expect("an imperfect parent has a failing case");
                let needed = self.budget_left().div_ceil(n_debug).min(n_explain);
                let instructions = instructions(
                    config.instruct,
                    problem,
                    &parent.source,
                    &failure,
                    n_explain,
                    needed,
                    self.backends.explain.as_ref(),
                    self.ctx.templates,
                )?;
                for instruction in instructions {
                    let take = self.budget_left().min(n_debug);
                    if take == 0 {
                        break;
                    }
                    let children = repair(
                        problem,
                        parent,
                        &instruction,
                        n_debug,
                        take,
                        self.backends.debug.as_ref(),
                        self.ctx.templates,
                        &mut self.ids,
                    )?;
                    for child in children {
                        let (step, candidate, evaluation) = self.evaluate(child)?;
                        if let Step::Solved(c) = step {
                            return Ok(Some(c));
                        }
                        next.push((candidate, evaluation));
                    }
                }
            }
            current = next;
        }
        Ok(None)
    }
}

fn summary_scores(history: &[Candidate]) -> (Option<f64>, Option<f64>) {
    let best = history
        .iter()
        .filter_map(|c| c.avg_score)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));
    (best, history.last().and_then(|c| c.avg_score))
}

/// Runs the loop on one problem. Every evaluated candidate and a terminal
/// record are written to the context's log; on error the terminal record is
/// marked aborted before the error is returned.
pub fn solve(
    problem: &Problem,
    config: &SearchConfig,
    backends: &Backends,
    ctx: &SearchContext<'_>,
    repeat: u32,
) -> Result<SearchResult, SearchError> {
    let config = config.clone().validate()?;
    problem.validate()?;
    let run_id = run_id(&problem.id, &config, repeat);
    let mut run = Run {
        problem,
        config: &config,
        backends,
        ctx,
        run_id: run_id.clone(),
        ids: IdSequence::new(),
        history: Vec::new(),
        generations: 0,
    };

    let outcome = ctx
        .sandbox
        .check_toolchain(problem.language)
        .map_err(SearchError::from)
        .and_then(|_| {
            backends.begin_run(config.seed);
            run.search()
        })
        .and_then(|solution| {
            let final_tpr = match &solution {
                None => None,
                Some(s) if problem.test_cases.is_empty() => s.per_test_scores.as_deref().map(tpr_or_zero),
                Some(s) => {
                    let e = ctx.sandbox.evaluate_source(
                        problem.language,
                        &s.source,
                        &problem.test_cases,
                        "test",
                        &config.exec_limits,
                    )?;
                    Some(tpr_or_zero(&e.per_test_scores))
                }
            };
            Ok((solution, final_tpr))
        });

    let (best, last) = summary_scores(&run.history);
    let mut record = ResultRecord {
        schema: SCHEMA_VERSION,
        run_id: run_id.clone(),
        problem_id: problem.id.clone(),
        dataset: ctx.dataset.clone(),
        language: problem.language,
        model: backends.model_label(),
        config: ConfigSummary::from(&config),
        seed: config.seed,
        repeat,
        status: RunStatus::Completed,
        error: None,
        solved: false,
        solution_id: None,
        solution_source: None,
        programs_generated: run.history.len() as u64,
        epg: None,
        final_tpr: None,
        generations: run.generations,
        best_avg_score: best,
        last_avg_score: last,
        finished_at: 0.0,
    };
    match outcome {
        Err(e) => {
            record.status = RunStatus::Aborted;
            record.error = Some(e.to_string());
            record.finished_at = ctx.log.now();
            // The original error matters more than a failure to log it.
            let _ = ctx.log.write(&LogRecord::Result(record));
            Err(e)
        }
        Ok((solution, final_tpr)) => {
            if let Some(s) = &solution {
                record.solved = true;
                record.solution_id = Some(s.id);
                record.solution_source = Some(s.source.clone());
                record.epg = Some(s.id);
                record.final_tpr = final_tpr;
            }
            record.finished_at = ctx.log.now();
            ctx.log.write(&LogRecord::Result(record))?;
            Ok(SearchResult {
                run_id,
                problem_id: problem.id.clone(),
                solved: solution.is_some(),
                epg: solution.as_ref().map(|s| s.id),
                solution,
                programs_generated: run.history.len() as u64,
                final_tpr,
                generations: run.generations,
                best_avg_score: best,
                last_avg_score: last,
                log_path: ctx.log.path().map(PathBuf::from),
                candidates: run.history,
            })
        }
    }
}

fn tpr_or_zero(scores: &[f64]) -> f64 {
    tpr(scores).unwrap_or(0.0)
}

/// One cell of a benchmark matrix.
#[derive(Debug)]
pub struct MatrixEntry {
    pub problem_id: String,
    pub config_index: usize,
    pub repeat: u32,
    pub run_id: String,
    pub outcome: MatrixOutcome,
}

#[derive(Debug)]
pub enum MatrixOutcome {
    Finished(Box<SearchResult>),
    /// Already completed in the log being resumed.
    Skipped,
    Failed(SearchError),
}

#[derive(Debug, Clone, Default)]
pub struct MatrixOptions {
    /// Skip runs whose terminal record (completed) is already in the log.
    pub resume: bool,
}

/// Runs every (problem, config, repeat) combination in that nesting order.
/// Repeat `r` uses seed `config.seed + r`. A failing run is recorded and the
/// matrix continues.
pub fn run_matrix(
    problems: &[Problem],
    configs: &[SearchConfig],
    repeats: u32,
    backends: &Backends,
    ctx: &SearchContext<'_>,
    options: &MatrixOptions,
) -> Result<Vec<MatrixEntry>, SearchError> {
    let done: HashSet<String> = match (options.resume, ctx.log.path()) {
        (true, Some(path)) if path.exists() => read_log(path)?
            .into_iter()
            .filter_map(|r| match r {
                LogRecord::Result(r) if r.status == RunStatus::Completed => Some(r.run_id),
                _ => None,
            })
            .collect(),
        _ => HashSet::new(),
    };
    let mut entries = Vec::new();
    for problem in problems {
        for (config_index, base) in configs.iter().enumerate() {
            for repeat in 0..repeats.max(1) {
                let config = SearchConfig {
                    seed: base.seed.wrapping_add(u64::from(repeat)),
                    ..base.clone()
                };
                let id = config
                    .clone()
                    .validate()
                    .map(|c| run_id(&problem.id, &c, repeat))
                    .unwrap_or_default();
                let outcome = if done.contains(&id) {
                    MatrixOutcome::Skipped
                } else {
                    match solve(problem, &config, backends, ctx, repeat) {
                        Ok(r) => MatrixOutcome::Finished(Box::new(r)),
                        Err(e) => MatrixOutcome::Failed(e),
                    }
                };
                entries.push(MatrixEntry {
                    problem_id: problem.id.clone(),
                    config_index,
                    repeat,
                    run_id: id,
                    outcome,
                });
            }
        }
    }
    Ok(entries)
}
