//! Running prefixes: post-processing, dependency installation, and
//! execution of composed programs through a pluggable backend.

mod deps;
mod process;
mod results;

pub use deps::{
    plan_dependencies, DependencyInstaller, DependencyPlan, EnvProbe, InstallReport, PackageInstaller,
    PipInstaller, PythonEnvProbe,
};
pub use process::{ProcessBackend, PythonEnv, SINK_FAILURE_STATUS};
pub use results::{parse_results, render_results, RawException, ResultsError};

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::instrument::{compose, compose_prefix_only, InstrumentedSnippet, LineOrigin, Program};
use crate::model::{
    CoverageSet, ExceptionInfo, ExecutionOutcome, Prefix, PrefixStatus, ProbeId, RunConfig, Snippet,
};
use crate::source::parse_suite;

/// What a backend observed while running one program.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawOutcome {
    /// Probe ids in firing order.
    pub probes: Vec<u32>,
    pub exception: Option<RawException>,
    pub exit_status: Option<i32>,
    pub timed_out: bool,
    pub wall_time: f64,
    pub stdout: String,
    pub stderr: String,
}

impl RawOutcome {
    pub fn clean(probes: impl IntoIterator<Item = u32>) -> Self {
        RawOutcome {
            probes: probes.into_iter().collect(),
            exit_status: Some(0),
            ..Default::default()
        }
    }

    pub fn raised(probes: impl IntoIterator<Item = u32>, type_name: &str, line: usize, message: &str) -> Self {
        RawOutcome {
            probes: probes.into_iter().collect(),
            exception: Some(RawException {
                type_name: type_name.into(),
                line,
                message: message.into(),
            }),
            exit_status: Some(1),
            ..Default::default()
        }
    }

    pub fn timeout(probes: impl IntoIterator<Item = u32>) -> Self {
        RawOutcome {
            probes: probes.into_iter().collect(),
            timed_out: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("backend failure: {0}")]
    Backend(String),
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs composed programs. Implementations must enforce `timeout` and never
/// let a misbehaving program take down the caller.
pub trait ExecBackend: Send + Sync {
    fn execute(&self, program: &Program, timeout: Duration) -> Result<RawOutcome, HarnessError>;
}

impl<F> ExecBackend for F
where
    F: Fn(&Program, Duration) -> Result<RawOutcome, HarnessError> + Send + Sync,
{
    fn execute(&self, program: &Program, timeout: Duration) -> Result<RawOutcome, HarnessError> {
        self(program, timeout)
    }
}

/// Result of post-processing one prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct PostProcessReport {
    pub prefix: Prefix,
    /// Entries removed, in removal order.
    pub removed: Vec<String>,
    pub executions: usize,
    pub reason: Option<String>,
}

/// Drops entries that are not valid statements on their own.
pub fn drop_unparsable(prefix: &mut Prefix) -> Vec<String> {
    let mut dropped = Vec::new();
    for list in [&mut prefix.imports, &mut prefix.initializations] {
        list.retain(|entry| {
            let ok = parse_suite(entry).is_ok();
            if !ok {
                dropped.push(entry.clone());
            }
            ok
        });
    }
    dropped
}

fn remove_entry(prefix: &mut Prefix, index: usize) -> String {
    if index < prefix.imports.len() {
        prefix.imports.remove(index)
    } else {
        prefix.initializations.remove(index - prefix.imports.len())
    }
}

/// Runs the prefix alone, removing the entry that raised after each failed
/// run, until it runs cleanly or the attempt budget is spent.
pub fn post_process(prefix: &Prefix, backend: &dyn ExecBackend, cfg: &RunConfig) -> Result<PostProcessReport, HarnessError> {
    let mut current = prefix.clone();
    let mut removed = Vec::new();
    for attempt in 1..=cfg.postprocess_attempts {
        let program = compose_prefix_only(&current);
        let raw = backend.execute(&program, cfg.prefix_timeout)?;
        let discard = |current: Prefix, removed, reason: String| {
            let mut prefix = current;
            prefix.status = PrefixStatus::Discarded;
            Ok(PostProcessReport {
                prefix,
                removed,
                executions: attempt,
                reason: Some(reason),
            })
        };
        if raw.timed_out {
            return discard(current, removed, format!("timed out after {:?}", cfg.prefix_timeout));
        }
        let Some(exception) = raw.exception else {
            current.status = PrefixStatus::PostProcessed;
            return Ok(PostProcessReport {
                prefix: current,
                removed,
                executions: attempt,
                reason: None,
            });
        };
        match program.entry_at(exception.line) {
            Some(index) => removed.push(remove_entry(&mut current, index)),
            None => {
                return discard(
                    current,
                    removed,
                    format!("{} at unattributable line {}", exception.type_name, exception.line),
                )
            }
        }
    }
    let mut prefix = current;
    prefix.status = PrefixStatus::Discarded;
    Ok(PostProcessReport {
        prefix,
        removed,
        executions: cfg.postprocess_attempts,
        reason: Some("attempt budget exhausted".into()),
    })
}

/// Maps a raw run of `program` onto the snippet's coverage and lines.
pub fn to_outcome(raw: &RawOutcome, program: &Program, snippet: &Snippet) -> ExecutionOutcome {
    let total = snippet.total_statements() as u32;
    let coverage: CoverageSet = raw
        .probes
        .iter()
        .filter(|id| (1..=total).contains(*id))
        .map(|id| ProbeId(*id))
        .collect();
    let exception = if raw.timed_out {
        None
    } else {
        raw.exception.as_ref().map(|e| ExceptionInfo {
            type_name: e.type_name.clone(),
            message: e.message.clone(),
            snippet_line: match program.origin(e.line) {
                LineOrigin::Snippet(line) => Some(line),
                LineOrigin::Prelude | LineOrigin::Unknown => None,
            },
        })
    };
    ExecutionOutcome {
        coverage,
        exception,
        timed_out: raw.timed_out,
        wall_time: raw.wall_time,
    }
}

/// Runs a post-processed prefix in front of the instrumented snippet.
pub fn execute_with_snippet(
    prefix: &Prefix,
    snippet: &Snippet,
    inst: &InstrumentedSnippet,
    backend: &dyn ExecBackend,
    cfg: &RunConfig,
) -> Result<ExecutionOutcome, HarnessError> {
    let program = compose(prefix, inst);
    let raw = backend.execute(&program, cfg.prefix_timeout)?;
    Ok(to_outcome(&raw, &program, snippet))
}

/// Everything that happened to one candidate prefix.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub prefix: Prefix,
    pub outcome: Option<ExecutionOutcome>,
    pub note: Option<String>,
}

/// Backend plus optional dependency installation, configured for a run.
#[derive(Clone)]
pub struct Harness {
    pub backend: Arc<dyn ExecBackend>,
    pub installer: Option<Arc<DependencyInstaller>>,
    pub config: RunConfig,
}

impl Harness {
    pub fn new(backend: Arc<dyn ExecBackend>, config: RunConfig) -> Self {
        Harness {
            backend,
            installer: None,
            config,
        }
    }

    pub fn with_installer(mut self, installer: Arc<DependencyInstaller>) -> Self {
        self.installer = Some(installer);
        self
    }

    /// Drops unparsable entries, installs dependencies, post-processes and,
    /// if the prefix survives, runs it with the snippet.
    pub fn evaluate(&self, prefix: Prefix, snippet: &Snippet, inst: &InstrumentedSnippet) -> Evaluation {
        let mut prefix = prefix;
        let mut notes = Vec::new();
        let dropped = drop_unparsable(&mut prefix);
        if !dropped.is_empty() {
            notes.push(format!("dropped {} unparsable entries", dropped.len()));
        }
        if let (Some(installer), true) = (&self.installer, self.config.install_deps) {
            let report = installer.ensure(&prefix);
            if !report.failed.is_empty() {
                notes.push(format!("install failed: {}", report.failed.join(", ")));
            }
        }
        let processed = match post_process(&prefix, self.backend.as_ref(), &self.config) {
            Ok(report) => report,
            Err(e) => {
                prefix.status = PrefixStatus::Discarded;
                notes.push(format!("harness error: {e}"));
                return Evaluation {
                    prefix,
                    outcome: None,
                    note: Some(notes.join("; ")),
                };
            }
        };
        if !processed.removed.is_empty() {
            notes.push(format!("post-processing removed {} entries", processed.removed.len()));
        }
        if let Some(reason) = &processed.reason {
            notes.push(format!("discarded: {reason}"));
        }
        let prefix = processed.prefix;
        let outcome = if prefix.status == PrefixStatus::PostProcessed {
            match execute_with_snippet(&prefix, snippet, inst, self.backend.as_ref(), &self.config) {
                Ok(outcome) => Some(outcome),
                Err(e) => {
                    notes.push(format!("harness error: {e}"));
                    None
                }
            }
        } else {
            None
        };
        Evaluation {
            prefix,
            outcome,
            note: (!notes.is_empty()).then(|| notes.join("; ")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::instrument;
    use crate::model::{PrefixId, Step};

    fn prefix(imports: &[&str], inits: &[&str]) -> Prefix {
        Prefix::new(
            PrefixId("p".into()),
            imports.iter().map(|s| s.to_string()).collect(),
            inits.iter().map(|s| s.to_string()).collect(),
            Step::Undefinedness,
            None,
        )
        .unwrap()
    }

    /// Fails on the first line whose text mentions `unknown_name`.
    fn name_error_backend(program: &Program, _: Duration) -> Result<RawOutcome, HarnessError> {
        for (i, line) in program.text.lines().enumerate() {
            if line.contains("unknown_name") {
                return Ok(RawOutcome::raised([], "NameError", i + 1, "name 'unknown_name' is not defined"));
            }
            if line.contains("while True") {
                return Ok(RawOutcome::timeout([]));
            }
        }
        Ok(RawOutcome::clean([]))
    }

    #[test]
    fn removes_the_failing_entry() {
        let cfg = RunConfig::default();
        let p = prefix(&[], &["x = 1", "y = unknown_name", "z = 2"]);
        let report = post_process(&p, &name_error_backend, &cfg).unwrap();
        assert_eq!(report.prefix.status, PrefixStatus::PostProcessed);
        assert_eq!(report.prefix.initializations, ["x = 1", "z = 2"]);
        assert_eq!(report.removed, ["y = unknown_name"]);
        assert_eq!(report.executions, 2);
    }

    #[test]
    fn clean_prefix_is_unchanged() {
        let p = prefix(&["import os"], &["x = 1"]);
        let report = post_process(&p, &name_error_backend, &RunConfig::default()).unwrap();
        assert_eq!(report.prefix.imports, p.imports);
        assert_eq!(report.prefix.initializations, p.initializations);
        assert_eq!(report.prefix.status, PrefixStatus::PostProcessed);
    }

    #[test]
    fn timeout_discards() {
        let p = prefix(&[], &["while True: pass"]);
        let report = post_process(&p, &name_error_backend, &RunConfig::default()).unwrap();
        assert_eq!(report.prefix.status, PrefixStatus::Discarded);
    }

    #[test]
    fn attempt_budget_bounds_executions() {
        let cfg = RunConfig {
            postprocess_attempts: 2,
            ..RunConfig::default()
        };
        let p = prefix(&[], &["a = unknown_name", "b = unknown_name", "c = unknown_name"]);
        let report = post_process(&p, &name_error_backend, &cfg).unwrap();
        assert_eq!(report.prefix.status, PrefixStatus::Discarded);
        assert_eq!(report.executions, 2);
        assert_eq!(report.prefix.initializations.len(), 1);
    }

    #[test]
    fn multi_line_entries_are_removed_whole() {
        let p = prefix(&[], &["def f():\n    return unknown_name", "v = 1"]);
        let backend = |program: &Program, _: Duration| -> Result<RawOutcome, HarnessError> {
            match program.entry_spans.first() {
                Some((_, last)) if program.text.contains("unknown_name") => {
                    Ok(RawOutcome::raised([], "NameError", *last, "boom"))
                }
                _ => Ok(RawOutcome::clean([])),
            }
        };
        let report = post_process(&p, &backend, &RunConfig::default()).unwrap();
        assert_eq!(report.prefix.initializations, ["v = 1"]);
    }

    #[test]
    fn unparsable_entries_are_dropped() {
        let mut p = prefix(&["import"], &["x = 1", "  y = 2", "def f(:"]);
        let dropped = drop_unparsable(&mut p);
        assert_eq!(dropped, ["import", "  y = 2", "def f(:"]);
        assert_eq!(p.initializations, ["x = 1"]);
    }

    #[test]
    fn outcome_maps_lines_back_to_snippet() {
        let snippet = Snippet::new("s", "a = 1\nb = a / 0\n").unwrap();
        let inst = instrument(&snippet).unwrap();
        let p = prefix(&["import math"], &[]);
        let program = compose(&p, &inst);
        // Program: runtime import, prefix import, a = 1, probe, b = a / 0.
        let raw = RawOutcome::raised([1], "ZeroDivisionError", 5, "division by zero");
        let outcome = to_outcome(&raw, &program, &snippet);
        assert_eq!(outcome.exception.as_ref().unwrap().snippet_line, Some(2));
        assert_eq!(outcome.coverage.len(), 1);

        let raw = RawOutcome::raised([], "NameError", 2, "x");
        assert_eq!(to_outcome(&raw, &program, &snippet).exception.unwrap().snippet_line, None);

        let raw = RawOutcome::clean([1, 2, 99]);
        assert_eq!(to_outcome(&raw, &program, &snippet).coverage.len(), 2);
    }
}
