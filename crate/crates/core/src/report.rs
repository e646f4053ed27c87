//! Per-snippet reports and the corpus summary derived from them.
//!
//! A summary is a pure function of the reports, so it can always be
//! recomputed from the files on disk.

use serde::{Deserialize, Serialize};

use crate::model::{coverage_ratio, CoverageSet, PrefixId, PrefixStatus, PrefixTree, RunConfig, Step};
use crate::scope::UndefinedRefs;
use crate::search::{SearchOutcome, StepTrace};

/// Version of both the per-snippet report and the summary layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Completed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetReport {
    pub schema_version: u32,
    pub snippet_id: String,
    pub status: ReportStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    pub generator: String,
    pub config: RunConfig,
    pub total_statements: usize,
    #[serde(default)]
    pub undefined: UndefinedRefs,
    pub prefixes: Vec<PrefixId>,
    pub best: Option<PrefixId>,
    pub cumulative: CoverageSet,
    pub cumulative_ratio: f64,
    /// Coverage ratio of `best` on its own.
    pub best_ratio: f64,
    /// Cumulative ratio over prefixes generated up to each step.
    pub step_coverage: [f64; 3],
    pub queries_used: usize,
    pub explored: usize,
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
    pub traces: Vec<StepTrace>,
    pub tree: PrefixTree,
    /// Seconds spent on the search.
    pub wall_time: f64,
}

fn ratio(covered: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        covered as f64 / total as f64
    }
}

impl SnippetReport {
    pub fn completed(
        snippet: &crate::model::Snippet,
        outcome: &SearchOutcome,
        config: &RunConfig,
        generator: &str,
    ) -> Self {
        let total = snippet.total_statements();
        let best_len = outcome
            .result
            .best
            .as_ref()
            .and_then(|id| outcome.tree.get(id))
            .and_then(|n| n.outcome.as_ref())
            .map_or(0, |o| o.coverage.len());
        let step_coverage = Step::ALL.map(|s| ratio(outcome.tree.coverage_through(s).len(), total));
        SnippetReport {
            schema_version: SCHEMA_VERSION,
            snippet_id: snippet.id().to_string(),
            status: ReportStatus::Completed,
            skip_reason: None,
            generator: generator.to_string(),
            config: config.clone(),
            total_statements: total,
            undefined: outcome.refs.clone(),
            prefixes: outcome.result.prefixes.clone(),
            best: outcome.result.best.clone(),
            cumulative: outcome.result.cumulative.clone(),
            cumulative_ratio: coverage_ratio(&outcome.result.cumulative, snippet).map_or(0.0, |r| r.as_f64()),
            best_ratio: ratio(best_len, total),
            step_coverage,
            queries_used: outcome.result.queries_used,
            explored: outcome.result.explored,
            degraded: outcome.result.degraded,
            stop_reason: outcome.stop_reason.clone(),
            traces: outcome.traces.clone(),
            tree: outcome.tree.clone(),
            wall_time: outcome.wall_time,
        }
    }

    pub fn skipped(snippet_id: &str, reason: impl Into<String>, config: &RunConfig, generator: &str) -> Self {
        SnippetReport {
            schema_version: SCHEMA_VERSION,
            snippet_id: snippet_id.to_string(),
            status: ReportStatus::Skipped,
            skip_reason: Some(reason.into()),
            generator: generator.to_string(),
            config: config.clone(),
            total_statements: 0,
            undefined: UndefinedRefs::default(),
            prefixes: Vec::new(),
            best: None,
            cumulative: CoverageSet::new(),
            cumulative_ratio: 0.0,
            best_ratio: 0.0,
            step_coverage: [0.0; 3],
            queries_used: 0,
            explored: 0,
            degraded: false,
            stop_reason: None,
            traces: Vec::new(),
            tree: PrefixTree::new(snippet_id),
            wall_time: 0.0,
        }
    }

    pub fn is_full(&self) -> bool {
        self.status == ReportStatus::Completed && self.cumulative.len() == self.total_statements
    }

    /// Nodes that survived post-processing.
    pub fn executed_prefixes(&self) -> usize {
        self.tree
            .nodes
            .iter()
            .filter(|n| n.prefix.status == PrefixStatus::PostProcessed)
            .count()
    }
}

/// Mean, median and maximum of a sample; all zero when empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Stats::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Stats {
            mean: mean(&sorted),
            median,
            max: sorted[sorted.len() - 1],
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSnippet {
    pub snippet_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallTime {
    pub total: f64,
    pub per_snippet: Stats,
}

/// Aggregate metrics over the completed snippets of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub schema_version: u32,
    /// Completed snippets; skipped ones are listed separately.
    pub snippet_count: usize,
    pub skipped: Vec<SkippedSnippet>,
    #[serde(rename = "mean_coverage_P")]
    pub mean_coverage_p: f64,
    #[serde(rename = "mean_coverage_pbest")]
    pub mean_coverage_pbest: f64,
    /// Fraction of snippets whose prefix set covers every statement.
    pub full_execution_rate: f64,
    pub mean_prefixes_explored: f64,
    pub prefixes_explored: Stats,
    #[serde(rename = "mean_P_size")]
    pub mean_p_size: f64,
    #[serde(rename = "P_size")]
    pub p_size: Stats,
    /// Mean cumulative coverage after steps 1, 2 and 3.
    pub step_coverage: [f64; 3],
    pub mean_queries: f64,
    pub degraded_count: usize,
    pub wall_time: WallTime,
}

impl CorpusSummary {
    /// Summary of `reports`, independent of their order.
    pub fn from_reports(reports: &[SnippetReport]) -> Self {
        let mut sorted: Vec<&SnippetReport> = reports.iter().collect();
        sorted.sort_by(|a, b| a.snippet_id.cmp(&b.snippet_id));
        let done: Vec<&SnippetReport> = sorted
            .iter()
            .copied()
            .filter(|r| r.status == ReportStatus::Completed)
            .collect();
        let skipped = sorted
            .iter()
            .filter(|r| r.status == ReportStatus::Skipped)
            .map(|r| SkippedSnippet {
                snippet_id: r.snippet_id.clone(),
                reason: r.skip_reason.clone().unwrap_or_default(),
            })
            .collect();
        let column = |f: &dyn Fn(&SnippetReport) -> f64| done.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let explored = column(&|r| r.explored as f64);
        let p_size = column(&|r| r.prefixes.len() as f64);
        let wall = column(&|r| r.wall_time);
        let full = done.iter().filter(|r| r.is_full()).count();
        CorpusSummary {
            schema_version: SCHEMA_VERSION,
            snippet_count: done.len(),
            skipped,
            mean_coverage_p: mean(&column(&|r| r.cumulative_ratio)),
            mean_coverage_pbest: mean(&column(&|r| r.best_ratio)),
            full_execution_rate: ratio(full, done.len()),
            mean_prefixes_explored: mean(&explored),
            prefixes_explored: Stats::of(&explored),
            mean_p_size: mean(&p_size),
            p_size: Stats::of(&p_size),
            step_coverage: [0, 1, 2].map(|i| mean(&column(&|r| r.step_coverage[i]))),
            mean_queries: mean(&column(&|r| r.queries_used as f64)),
            degraded_count: done.iter().filter(|r| r.degraded).count(),
            wall_time: WallTime {
                total: wall.iter().sum(),
                per_snippet: Stats::of(&wall),
            },
        }
    }

    /// The summary with wall-time figures zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        CorpusSummary {
            wall_time: WallTime {
                total: 0.0,
                per_snippet: Stats::default(),
            },
            ..self.clone()
        }
    }
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    snippet_id: &'a str,
    status: &'a str,
    statements: usize,
    #[serde(rename = "coverage_P")]
    coverage_p: f64,
    coverage_pbest: f64,
    coverage_step1: f64,
    coverage_step2: f64,
    coverage_step3: f64,
    prefixes_explored: usize,
    #[serde(rename = "P_size")]
    p_size: usize,
    queries: usize,
    degraded: bool,
    wall_time: f64,
}

/// One CSV row per snippet, in id order.
pub fn render_csv(reports: &[SnippetReport]) -> Result<String, csv::Error> {
    let mut sorted: Vec<&SnippetReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.snippet_id.cmp(&b.snippet_id));
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in sorted {
        writer.serialize(CsvRow {
            snippet_id: &r.snippet_id,
            status: match r.status {
                ReportStatus::Completed => "completed",
                ReportStatus::Skipped => "skipped",
            },
            statements: r.total_statements,
            coverage_p: r.cumulative_ratio,
            coverage_pbest: r.best_ratio,
            coverage_step1: r.step_coverage[0],
            coverage_step2: r.step_coverage[1],
            coverage_step3: r.step_coverage[2],
            prefixes_explored: r.explored,
            p_size: r.prefixes.len(),
            queries: r.queries_used,
            degraded: r.degraded,
            wall_time: r.wall_time,
        })?;
    }
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
