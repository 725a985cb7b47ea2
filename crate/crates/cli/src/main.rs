use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use repairloop::bench::{load_humaneval_x, load_psb2, Psb2Options, PSB2_PROBLEMS};
use repairloop::grid::{Benchmark, Grid, ModelFamily};
use repairloop::metrics::{report, runs, ReportMode, DEFAULT_KS};
use repairloop::runlog::{read_log, Clock, LogWriter};
use repairloop::search::{run_matrix, MatrixOptions, MatrixOutcome};
use repairloop::{
    solve, Arity, Backends, HttpBackend, InstructMode, Language, ModelBackend, Problem, Sandbox, ScriptedBackend,
    SearchConfig, SearchContext, SearchError, Selection, Templates, Toolchain,
};

#[derive(Parser)]
#[command(name = "repairloop", version, about = "Program synthesis by iterated test-driven repair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem with one configuration.
    Run(RunArgs),
    /// Run every (problem, config, repeat) combination.
    Bench(BenchArgs),
    /// Aggregate run logs into pass@k tables.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataset {
    Psb2,
    #[value(name = "humaneval-x")]
    HumanevalX,
}

impl Dataset {
    fn label(self) -> &'static str {
        match self {
            Dataset::Psb2 => "psb2",
            Dataset::HumanevalX => "humaneval-x",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Http,
    Scripted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Args)]
struct SearchFlags {
    /// TOML or JSON file with search settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parents kept per generation (integer or `inf`).
    #[arg(long)]
    beam_width: Option<Arity>,
    /// Drafts in the first generation (integer or `inf`).
    #[arg(long)]
    n_draft: Option<Arity>,
    #[arg(long)]
    n_explain: Option<usize>,
    #[arg(long)]
    n_debug: Option<usize>,
    #[arg(long)]
    max_programs: Option<usize>,
    #[arg(long)]
    selection: Option<Selection>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    instruct: Option<InstructMode>,
    /// Seconds.
    #[arg(long)]
    compile_timeout: Option<f64>,
    /// Seconds per test case.
    #[arg(long)]
    run_timeout: Option<f64>,
    #[arg(long)]
    max_output_lines: Option<usize>,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum)]
    dataset: Dataset,
    /// PSB2 datasets directory, or the HumanEval-X release file.
    #[arg(long)]
    data_root: PathBuf,
    #[arg(long, default_value = "python")]
    language: Language,
    #[arg(long, value_enum, default_value = "http")]
    backend: BackendKind,
    /// Base URL of a chat-completions endpoint.
    #[arg(long, default_value = "http://localhost:11434/v1")]
    backend_url: String,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    model_name: String,
    /// Completions file for the scripted backend.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// JSONL log path.
    #[arg(long)]
    out: PathBuf,
    /// Test cases run concurrently per candidate.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory of prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Keep program directories here instead of a temporary directory.
    #[arg(long)]
    scratch: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    n_validation: usize,
    #[arg(long, default_value_t = 2000)]
    n_test: usize,
    /// Seed for the PSB2 validation/test draw.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchFlags,
    #[arg(long)]
    problem: String,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchFlags,
    /// Problems to run (repeatable); all problems by default.
    #[arg(long)]
    problem: Vec<String>,
    /// Preset grid replacing the single configuration: static-arity, chat-arity, lexicase.
    #[arg(long)]
    grid: Option<Grid>,
    /// Runs per configuration; repeat r uses seed + r. Defaults to the grid's count, else 1.
    #[arg(long)]
    repeats: Option<u32>,
    /// Skip runs already completed in the output log.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Log files to aggregate.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "union")]
    mode: ReportMode,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
    ks: Vec<u64>,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
}

/// Error with its exit status: 1 for bad input, 2 for aborted runs.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn aborted(e: SearchError) -> Failure {
    Failure {
        code: if e.is_abort() { 2 } else { 1 },
        error: e.into(),
    }
}

fn read_config_file(path: &Path) -> anyhow::Result<(SearchConfig, bool)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let value: serde_json::Value = if is_json {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        serde_json::to_value(table)?
    };
    let has_budget = value.get("max_programs").is_some();
    let config = serde_json::from_value(value).with_context(|| format!("invalid settings in {}", path.display()))?;
    Ok((config, has_budget))
}

fn search_config(flags: &SearchFlags) -> anyhow::Result<SearchConfig> {
    let (mut c, mut has_budget) = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => (SearchConfig::default(), false),
    };
    if let Some(v) = flags.beam_width {
        c.beam_width = v;
    }
    if let Some(v) = flags.n_draft {
        c.n_draft = v;
    }
    if let Some(v) = flags.n_explain {
        c.n_explain = v;
    }
    if let Some(v) = flags.n_debug {
        c.n_debug = v;
    }
    if let Some(v) = flags.max_programs {
        c.max_programs = v;
        has_budget = true;
    }
    if let Some(v) = flags.selection {
        c.selection = v;
    }
    if let Some(v) = flags.seed {
        c.seed = v;
    }
    if let Some(v) = flags.instruct {
        c.instruct = v;
    }
    if let Some(v) = flags.compile_timeout {
        c.exec_limits.compile_timeout = v;
    }
    if let Some(v) = flags.run_timeout {
        c.exec_limits.run_timeout = v;
    }
    if let Some(v) = flags.max_output_lines {
        c.exec_limits.max_output_lines = v;
    }
    if (c.beam_width.is_inf() || c.n_draft.is_inf()) && !has_budget {
        bail!("`inf` for --beam-width or --n-draft requires --max-programs");
    }
    c.clone().validate().map_err(|e| anyhow!("--{}: {e}", e.field.replace('_', "-")))?;
    Ok(c)
}

fn backends(common: &Common) -> anyhow::Result<Backends> {
    let backend: Arc<dyn ModelBackend> = match common.backend {
        BackendKind::Scripted => {
            let path = common.fixture.as_ref().ok_or_else(|| anyhow!("--backend scripted requires --fixture"))?;
            Arc::new(ScriptedBackend::from_path(path)?)
        }
        BackendKind::Http => Arc::new(
            HttpBackend::new(&common.backend_url, &common.model_name)?
                .with_env_api_key()
                .with_concurrency(common.workers.max(1)),
        ),
    };
    Ok(Backends::uniform(backend))
}

fn load_problems(common: &Common, wanted: &[String]) -> anyhow::Result<Vec<Problem>> {
    match common.dataset {
        Dataset::Psb2 => {
            let options = Psb2Options {
                language: common.language,
                n_validation: common.n_validation,
                n_test: common.n_test,
                seed: common.split_seed,
            };
            let ids: Vec<String> = if wanted.is_empty() {
                PSB2_PROBLEMS.iter().map(|s| s.to_string()).collect()
            } else {
                wanted.to_vec()
            };
            ids.iter()
                .map(|id| load_psb2(&common.data_root, id, &options).map_err(Into::into))
                .collect()
        }
        Dataset::HumanevalX => {
            let all = load_humaneval_x(&common.data_root, common.language)?;
            if wanted.is_empty() {
                return Ok(all);
            }
            wanted
                .iter()
                .map(|id| {
                    all.iter()
                        .find(|p| &p.id == id)
                        .cloned()
                        .ok_or_else(|| anyhow!("problem `{id}` not in {}", common.data_root.display()))
                })
                .collect()
        }
    }
}

struct Session {
    sandbox: Sandbox,
    templates: Templates,
    log: LogWriter,
    backends: Backends,
}

impl Session {
    fn open(common: &Common, append: bool) -> anyhow::Result<Self> {
        let sandbox = match &common.scratch {
            Some(dir) => Sandbox::in_dir(Toolchain::default(), dir)?,
            None => Sandbox::new(Toolchain::default())?,
        }
        .with_workers(common.workers)?;
        let templates = match &common.templates {
            Some(dir) => Templates::load_dir(dir)?,
            None => Templates::default(),
        };
        // Replayed completions get replayable timestamps too.
        let clock = match common.backend {
            BackendKind::Scripted => Clock::logical(),
            BackendKind::Http => Clock::Wall,
        };
        let log = if append {
            LogWriter::append(&common.out, clock)?
        } else {
            LogWriter::create(&common.out, clock)?
        };
        Ok(Self {
            sandbox,
            templates,
            log,
            backends: backends(common)?,
        })
    }

    fn context(&self, dataset: Dataset) -> SearchContext<'_> {
        SearchContext {
            sandbox: &self.sandbox,
            templates: &self.templates,
            log: &self.log,
            dataset: Some(dataset.label().to_owned()),
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let config = search_config(&args.search)?;
    let problems = load_problems(&args.common, std::slice::from_ref(&args.problem))?;
    let session = Session::open(&args.common, false)?;
    let result = solve(&problems[0], &config, &session.backends, &session.context(args.common.dataset), 0)
        .map_err(aborted)?;
    println!("{}", serde_json::to_string_pretty(&result).map_err(anyhow::Error::from)?);
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let common = &args.common;
    let configs = match args.grid {
        Some(grid) => {
            let benchmark = match common.dataset {
                Dataset::Psb2 => Benchmark::Psb2,
                Dataset::HumanevalX => Benchmark::HumanEval,
            };
            let model = match grid {
                Grid::Lexicase => common.model_name.parse::<ModelFamily>().map_err(anyhow::Error::from)?,
                // Arity grids do not depend on the model.
                _ => ModelFamily::Gpt35,
            };
            grid.configs(benchmark, model, common.language)
        }
        None => vec![search_config(&args.search)?],
    };
    let repeats = args.repeats.unwrap_or_else(|| args.grid.map_or(1, Grid::repeats));
    let problems = load_problems(common, &args.problem)?;
    let session = Session::open(common, args.resume)?;
    let entries = run_matrix(
        &problems,
        &configs,
        repeats,
        &session.backends,
        &session.context(common.dataset),
        &MatrixOptions { resume: args.resume },
    )
    .map_err(aborted)?;

    let mut abort = None;
    for e in &entries {
        let status = match &e.outcome {
            MatrixOutcome::Finished(r) => match r.epg {
                Some(epg) => format!("solved epg={epg} final_tpr={}", r.final_tpr.unwrap_or(0.0)),
                None => format!("unsolved programs={}", r.programs_generated),
            },
            MatrixOutcome::Skipped => "skipped".to_owned(),
            MatrixOutcome::Failed(err) => {
                if err.is_abort() && abort.is_none() {
                    abort = Some(err.to_string());
                }
                format!("failed: {err}")
            }
        };
        println!("{}\tconfig={}\trepeat={}\t{}\t{status}", e.problem_id, e.config_index, e.repeat, e.run_id);
    }
    match abort {
        Some(message) => Err(Failure {
            code: 2,
            error: anyhow!("at least one run aborted: {message}"),
        }),
        None => Ok(()),
    }
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let mut records = Vec::new();
    for path in &args.inputs {
        records.extend(read_log(path).map_err(anyhow::Error::from)?);
    }
    let report = report(&runs(&records), args.mode, &args.ks).map_err(anyhow::Error::from)?;
    match args.format {
        Format::Tsv => print!("{}", report.to_tsv()),
        Format::Json => println!("{}", report.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
