//! Batch runs over a directory of snippet files.
//!
//! Layout under the output directory:
//!
//! ```text
//! reports/<snippet id>.json   one per snippet, written as soon as it finishes
//! summary.json                CorpusSummary
//! summary.csv                 one row per snippet
//! ```
//!
//! A rerun skips snippets whose report already exists, so an interrupted
//! run can be resumed with the same command.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::generator::Generator;
use crate::harness::Harness;
use crate::model::Snippet;
use crate::report::{render_csv, CorpusSummary, SnippetReport};
use crate::search;

pub const SNIPPET_EXTENSION: &str = "py";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Parallel snippet workers; 0 picks one per core.
    pub workers: usize,
}

/// Snippet files of a flat corpus directory as (id, path), sorted by id.
pub fn discover(dir: &Path) -> Result<Vec<(String, PathBuf)>, CorpusError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == SNIPPET_EXTENSION) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                found.push((stem.to_string(), path));
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn report_path(out: &Path, id: &str) -> PathBuf {
    out.join("reports").join(format!("{id}.json"))
}

/// Writes through a temporary file so readers never see half a file.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CorpusError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Report already on disk for `id`, if it is complete and readable.
fn existing_report(out: &Path, id: &str) -> Option<SnippetReport> {
    let text = fs::read_to_string(report_path(out, id)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Runs the search on one snippet file. Never fails: problems with the
/// snippet itself become a skipped report.
pub fn run_snippet(id: &str, path: &Path, generator: &dyn Generator, harness: &Harness) -> SnippetReport {
    let cfg = &harness.config;
    let source = match fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => return SnippetReport::skipped(id, format!("unreadable: {e}"), cfg, generator.name()),
    };
    let snippet = match Snippet::new(id, source) {
        Ok(s) => s,
        Err(e) => return SnippetReport::skipped(id, e.to_string(), cfg, generator.name()),
    };
    match search::run(&snippet, generator, harness) {
        Ok(outcome) => SnippetReport::completed(&snippet, &outcome, cfg, generator.name()),
        Err(e) => SnippetReport::skipped(id, e.to_string(), cfg, generator.name()),
    }
}

/// Reads every report under `out/reports`.
pub fn load_reports(out: &Path) -> Result<Vec<SnippetReport>, CorpusError> {
    let dir = out.join("reports");
    let mut reports = Vec::new();
    if !dir.exists() {
        return Ok(reports);
    }
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let path = entry.map_err(io_err(&dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let report = serde_json::from_str(&text).map_err(|source| CorpusError::Json { path, source })?;
            reports.push(report);
        }
    }
    reports.sort_by(|a: &SnippetReport, b| a.snippet_id.cmp(&b.snippet_id));
    Ok(reports)
}

/// Computes `summary.json` and `summary.csv` from `reports` and writes them.
pub fn write_summary(out: &Path, reports: &[SnippetReport]) -> Result<CorpusSummary, CorpusError> {
    let summary = CorpusSummary::from_reports(reports);
    let json_path = out.join("summary.json");
    let mut json = serde_json::to_string_pretty(&summary).map_err(|source| CorpusError::Json {
        path: json_path.clone(),
        source,
    })?;
    json.push('\n');
    write_atomic(&json_path, json.as_bytes())?;
    write_atomic(&out.join("summary.csv"), render_csv(reports)?.as_bytes())?;
    Ok(summary)
}

pub fn run_corpus(opts: &CorpusOptions, generator: &dyn Generator, harness: &Harness) -> Result<CorpusSummary, CorpusError> {
    let snippets = discover(&opts.input)?;
    let reports_dir = opts.out.join("reports");
    fs::create_dir_all(&reports_dir).map_err(io_err(&reports_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| CorpusError::Pool(e.to_string()))?;

    let reports: Vec<Result<SnippetReport, CorpusError>> = pool.install(|| {
        snippets
            .par_iter()
            .map(|(id, path)| {
                if let Some(done) = existing_report(&opts.out, id) {
                    log::debug!("{id}: report exists, skipping");
                    return Ok(done);
                }
                let report = run_snippet(id, path, generator, harness);
                log::info!(
                    "{id}: coverage {:.2}, {} prefixes explored",
                    report.cumulative_ratio,
                    report.explored
                );
                let target = report_path(&opts.out, id);
                let json = serde_json::to_string_pretty(&report).map_err(|source| CorpusError::Json {
                    path: target.clone(),
                    source,
                })?;
                write_atomic(&target, json.as_bytes())?;
                Ok(report)
            })
            .collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_summary(&opts.out, &reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::RunConfig;

    fn harness() -> Harness {
        Harness::new(
            fixtures::running_example_backend(),
            RunConfig {
                n: 2,
                install_deps: false,
                ..RunConfig::default()
            },
        )
    }

    fn corpus(files: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (name, text) in files {
            fs::write(dir.path().join(name), text).unwrap();
        }
        dir
    }

    #[test]
    fn discovers_python_files_by_stem() {
        let dir = corpus(&[("b.py", "x"), ("a.py", "y"), ("notes.txt", "z")]);
        let ids: Vec<String> = discover(dir.path()).unwrap().into_iter().map(|(id, _)| id).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn scripted_corpus_reaches_full_execution() {
        let input = corpus(&[
            ("one.py", fixtures::RUNNING_EXAMPLE),
            ("two.py", fixtures::RUNNING_EXAMPLE),
            ("three.py", fixtures::RUNNING_EXAMPLE),
        ]);
        let out = tempfile::tempdir().unwrap();
        let opts = CorpusOptions {
            input: input.path().into(),
            out: out.path().into(),
            workers: 2,
        };
        let summary = run_corpus(&opts, &fixtures::running_example_script(), &harness()).unwrap();
        assert_eq!(summary.snippet_count, 3);
        assert_eq!(summary.full_execution_rate, 1.0);
        assert_eq!(summary.step_coverage, [0.3, 0.6, 1.0]);
        assert!(out.path().join("summary.csv").exists());
    }

    #[test]
    fn bad_snippets_are_skipped_not_fatal() {
        let input = corpus(&[("broken.py", "def f(:\n"), ("empty.py", "# nothing\n"), ("ok.py", fixtures::RUNNING_EXAMPLE)]);
        let out = tempfile::tempdir().unwrap();
        let opts = CorpusOptions {
            input: input.path().into(),
            out: out.path().into(),
            workers: 1,
        };
        let summary = run_corpus(&opts, &fixtures::running_example_script(), &harness()).unwrap();
        assert_eq!(summary.snippet_count, 1);
        let skipped: Vec<&str> = summary.skipped.iter().map(|s| s.snippet_id.as_str()).collect();
        assert_eq!(skipped, ["broken", "empty"]);
    }

    #[test]
    fn rerun_changes_nothing_and_summary_recomputes() {
        let input = corpus(&[("a.py", fixtures::RUNNING_EXAMPLE), ("b.py", "print(undefined_thing)\n")]);
        let out = tempfile::tempdir().unwrap();
        let opts = CorpusOptions {
            input: input.path().into(),
            out: out.path().into(),
            workers: 2,
        };
        let first = run_corpus(&opts, &fixtures::running_example_script(), &harness()).unwrap();
        let snapshot = |name: &str| fs::read(out.path().join(name)).unwrap();
        let before = [snapshot("summary.json"), snapshot("summary.csv"), snapshot("reports/a.json")];

        let refuse = |_: &crate::generator::GeneratorRequest| -> Result<crate::generator::GeneratorBatch, crate::generator::GeneratorUnavailable> {
            panic!("completed snippets must not be searched again")
        };
        let second = run_corpus(&opts, &refuse, &harness()).unwrap();
        assert_eq!(first, second);
        assert_eq!(before, [snapshot("summary.json"), snapshot("summary.csv"), snapshot("reports/a.json")]);
        assert_eq!(CorpusSummary::from_reports(&load_reports(out.path()).unwrap()), first);
    }
}
