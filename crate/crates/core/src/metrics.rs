//! Test pass rate, excess programs generated, pass@k, and aggregate reports
//! over run logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runlog::{ConfigSummary, LogRecord, ResultRecord};
use crate::types::CandidateId;

pub const DEFAULT_KS: [u64; 3] = [1, 10, 100];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no test scores to summarize")]
    EmptyScores,
    #[error("results mix datasets: {0:?}")]
    MixedDataset(Vec<String>),
    #[error("k must be at least 1")]
    InvalidK,
}

/// Fraction of scores exactly equal to 1.
pub fn tpr(scores: &[f64]) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    Ok(scores.iter().filter(|&&s| s == 1.0).count() as f64 / scores.len() as f64)
}

/// Id of the first candidate in `records` whose validation scores are all 1;
/// ids count the programs generated before it.
pub fn epg_of(records: &[LogRecord]) -> Option<CandidateId> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Candidate(c)
                if !c.per_test_scores.is_empty() && c.per_test_scores.iter().all(|&s| s == 1.0) =>
            {
                Some(c.candidate_id)
            }
            _ => None,
        })
        .min()
}

/// The parts of a terminal record that metrics need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub problem_id: String,
    pub dataset: Option<String>,
    pub model: String,
    pub config: ConfigSummary,
    pub repeat: u32,
    pub epg: Option<u64>,
    pub final_tpr: Option<f64>,
}

impl From<&ResultRecord> for RunSummary {
    fn from(r: &ResultRecord) -> Self {
        Self {
            run_id: r.run_id.clone(),
            problem_id: r.problem_id.clone(),
            dataset: r.dataset.clone(),
            model: r.model.clone(),
            config: r.config.clone(),
            repeat: r.repeat,
            epg: r.epg,
            final_tpr: r.final_tpr,
        }
    }
}

impl RunSummary {
    /// Found a validation-perfect program but it failed held-out tests.
    pub fn validation_only(&self) -> bool {
        self.epg.is_some() && self.final_tpr != Some(1.0)
    }
}

/// Terminal records of `records`, one per run id (the last one wins).
pub fn runs(records: &[LogRecord]) -> Vec<RunSummary> {
    let mut by_id: BTreeMap<&str, (usize, &ResultRecord)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if let LogRecord::Result(result) = r {
            by_id.insert(&result.run_id, (i, result));
        }
    }
    let mut ordered: Vec<(usize, &ResultRecord)> = by_id.into_values().collect();
    ordered.sort_by_key(|(i, _)| *i);
    ordered.into_iter().map(|(_, r)| RunSummary::from(r)).collect()
}

/// A run passes at `k` when its solution is among the first `k` programs and
/// passes every held-out test.
pub fn pass_at_k(run: &RunSummary, k: u64) -> bool {
    matches!(run.epg, Some(e) if e < k) && run.final_tpr == Some(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    /// One row per repeat index.
    PerRun,
    /// Problems solved, averaged over repeats.
    MeanOverRepeats,
    /// Problems solved in at least one repeat.
    Union,
}

impl std::str::FromStr for ReportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_run" | "per-run" => Ok(ReportMode::PerRun),
            "mean" | "mean_over_repeats" | "mean-over-repeats" => Ok(ReportMode::MeanOverRepeats),
            "union" => Ok(ReportMode::Union),
            other => Err(format!("unknown report mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub config: ConfigSummary,
    /// Set in per-run mode.
    pub repeat: Option<u32>,
    pub runs: usize,
    pub problems: usize,
    /// Problem counts, one per k.
    pub pass: Vec<f64>,
    /// Runs that found a validation-perfect program that failed held-out tests.
    pub validation_only: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: Option<String>,
    pub mode: ReportMode,
    pub ks: Vec<u64>,
    pub rows: Vec<ReportRow>,
}

type RowKey = (String, ConfigSummary);

/// Aggregates runs into rows of (model, configuration) with one pass@k count
/// per k.
pub fn report(runs: &[RunSummary], mode: ReportMode, ks: &[u64]) -> Result<Report, MetricsError> {
    if ks.contains(&0) {
        return Err(MetricsError::InvalidK);
    }
    let datasets: BTreeSet<String> = runs.iter().map(|r| r.dataset.clone().unwrap_or_default()).collect();
    if datasets.len() > 1 {
        return Err(MetricsError::MixedDataset(datasets.into_iter().collect()));
    }
    let mut groups: BTreeMap<RowKey, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.model.clone(), r.config.clone())).or_default().push(r);
    }

    let mut rows = Vec::new();
    for ((model, config), group) in groups {
        let problems: BTreeSet<&str> = group.iter().map(|r| r.problem_id.as_str()).collect();
        let validation_only = |runs: &[&RunSummary]| runs.iter().filter(|r| r.validation_only()).count();
        match mode {
            ReportMode::PerRun => {
                let mut by_repeat: BTreeMap<u32, Vec<&RunSummary>> = BTreeMap::new();
                for r in &group {
                    by_repeat.entry(r.repeat).or_default().push(r);
                }
                for (repeat, runs) in by_repeat {
                    let pass = ks
                        .iter()
                        .map(|&k| {
                            let solved: BTreeSet<&str> = runs
                                .iter()
                                .filter(|r| pass_at_k(r, k))
                                .map(|r| r.problem_id.as_str())
                                .collect();
                            solved.len() as f64
                        })
                        .collect();
                    rows.push(ReportRow {
                        model: model.clone(),
                        config: config.clone(),
                        repeat: Some(repeat),
                        runs: runs.len(),
                        problems: runs.iter().map(|r| r.problem_id.as_str()).collect::<BTreeSet<_>>().len(),
                        pass,
                        validation_only: validation_only(&runs),
                    });
                }
            }
            ReportMode::MeanOverRepeats | ReportMode::Union => {
                let pass = ks
                    .iter()
                    .map(|&k| {
                        problems
                            .iter()
                            .map(|p| {
                                let mine: Vec<&&RunSummary> = group.iter().filter(|r| r.problem_id == *p).collect();
                                let passed = mine.iter().filter(|r| pass_at_k(r, k)).count();
                                match mode {
                                    ReportMode::Union => f64::from(u8::from(passed > 0)),
                                    _ => passed as f64 / mine.len() as f64,
                                }
                            })
                            .sum()
                    })
                    .collect();
                rows.push(ReportRow {
                    model,
                    config,
                    repeat: None,
                    runs: group.len(),
                    problems: problems.len(),
                    pass,
                    validation_only: validation_only(&group),
                });
            }
        }
    }
    Ok(Report {
        dataset: datasets.into_iter().next().filter(|d| !d.is_empty()),
        mode,
        ks: ks.to_vec(),
        rows,
    })
}

fn format_count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

impl Report {
    /// Tab-separated table with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "model\tbeam_width\tn_draft\tn_explain\tn_debug\tmax_programs\tselection\tinstruct\trepeat\truns\tproblems",
        );
        for k in &self.ks {
            let _ = write!(out, "\tpass@{k}");
        }
        out.push_str("\tvalidation_only\n");
        for row in &self.rows {
            let c = &row.config;
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                row.model,
                c.beam_width,
                c.n_draft,
                c.n_explain,
                c.n_debug,
                c.max_programs,
                c.selection,
                c.instruct,
                row.repeat.map_or("-".to_owned(), |r| r.to_string()),
                row.runs,
                row.problems
            );
            for v in &row.pass {
                let _ = write!(out, "\t{}", format_count(*v));
            }
            let _ = writeln!(out, "\t{}", row.validation_only);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SearchConfig;

    fn run(problem: &str, repeat: u32, epg: Option<u64>, tpr: Option<f64>) -> RunSummary {
        RunSummary {
            run_id: format!("{problem}-{repeat}"),
            problem_id: problem.into(),
            dataset: Some("psb2".into()),
            model: "m".into(),
            config: ConfigSummary::from(&SearchConfig::default()),
            repeat,
            epg,
            final_tpr: tpr,
        }
    }

    #[test]
    fn tpr_examples() {
        assert_eq!(tpr(&[1.0, 1.0, 1.0, 1.0]), Ok(1.0));
        assert_eq!(tpr(&[1.0, 0.9, 0.0]), Ok(1.0 / 3.0));
        assert_eq!(tpr(&[0.0, 0.0]), Ok(0.0));
        assert_eq!(tpr(&[]), Err(MetricsError::EmptyScores));
    }

    #[test]
    fn pass_at_k_boundaries() {
        assert!(pass_at_k(&run("p", 0, Some(0), Some(1.0)), 1));
        let r = run("p", 0, Some(9), Some(1.0));
        assert!(pass_at_k(&r, 10));
        assert!(!pass_at_k(&r, 9));
        let unsolved = run("p", 0, None, None);
        assert!((1..200).all(|k| !pass_at_k(&unsolved, k)));
        let overfit = run("p", 0, Some(0), Some(0.5));
        assert!(!pass_at_k(&overfit, 100));
        assert!(overfit.validation_only());
    }

    #[test]
    fn mean_versus_union() {
        let runs: Vec<RunSummary> = (0..6)
            .map(|i| run("p", i, if i < 2 { Some(0) } else { None }, if i < 2 { Some(1.0) } else { None }))
            .collect();
        let mean = report(&runs, ReportMode::MeanOverRepeats, &[1]).unwrap();
        let union = report(&runs, ReportMode::Union, &[1]).unwrap();
        assert!((mean.rows[0].pass[0] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(union.rows[0].pass[0], 1.0);
    }

    #[test]
    fn single_run_modes_agree() {
        let runs = vec![run("a", 0, Some(3), Some(1.0)), run("b", 0, None, None)];
        let per = report(&runs, ReportMode::PerRun, &DEFAULT_KS).unwrap();
        let mean = report(&runs, ReportMode::MeanOverRepeats, &DEFAULT_KS).unwrap();
        let union = report(&runs, ReportMode::Union, &DEFAULT_KS).unwrap();
        assert_eq!(per.rows[0].pass, vec![0.0, 1.0, 1.0]);
        assert_eq!(per.rows[0].pass, mean.rows[0].pass);
        assert_eq!(mean.rows[0].pass, union.rows[0].pass);
    }

    #[test]
    fn mixed_datasets_rejected() {
        let mut b = run("b", 0, None, None);
        b.dataset = Some("humaneval-x".into());
        assert!(matches!(
            report(&[run("a", 0, None, None), b], ReportMode::Union, &[1]),
            Err(MetricsError::MixedDataset(_))
        ));
    }

    #[test]
    fn tsv_layout() {
        let report = report(&[run("a", 0, Some(0), Some(1.0))], ReportMode::Union, &DEFAULT_KS).unwrap();
        let tsv = report.to_tsv();
        let mut lines = tsv.lines();
        assert!(lines.next().unwrap().ends_with("pass@1\tpass@10\tpass@100\tvalidation_only"));
        assert_eq!(lines.next().unwrap(), "m\t10\t10\t2\t10\t100\ttournament\tllm\t-\t1\t1\t1\t1\t1\t0");
    }
}
