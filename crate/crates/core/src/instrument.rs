//! Probe insertion and program composition.
//!
//! Every executable statement gets a probe call that fires only once the
//! statement has completed. Simple statements are followed by their probe;
//! compound headers are credited from inside the suite they select; `def`
//! and `class` are credited after the definition; `return` and `raise`
//! evaluate their operand into a temporary before firing.
//!
//! The output is re-emitted statement by statement at four spaces per block
//! level, so comments and blank lines are dropped and `elif` chains become
//! nested `else: if`.

use std::collections::BTreeMap;

use rustpython_parser::ast::{self, Ranged, Stmt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Prefix, ProbeId, Snippet};
use crate::source::{end_of, header_colon_end, parse_suite, start_of, LineIndex, SyntaxError};

/// Name of the probe function visible to instrumented code.
pub const PROBE_NAME: &str = "__pfx_probe__";
/// Temporary that holds `return`/`raise` operands.
pub const TEMP_NAME: &str = "__pfx_value__";
/// Module the runtime shim exposes the probe from.
pub const RUNTIME_MODULE: &str = "__pfx_runtime__";

const INDENT: &str = "    ";

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("snippet uses the reserved name `{0}`")]
    ReservedName(&'static str),
    #[error("statement index mismatch: {0}")]
    IndexMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentedSnippet {
    pub source: String,
    /// Probe id to the original line of its statement.
    pub source_map: BTreeMap<ProbeId, usize>,
    /// For each instrumented line (index 0 = line 1), the original line it
    /// came from, if any.
    pub line_map: Vec<Option<usize>>,
}

/// A composed program ready to hand to an execution backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub text: String,
    /// Lines ahead of the instrumented snippet (runtime import plus prefix).
    pub prelude_lines: usize,
    pub line_map: Vec<Option<usize>>,
    /// Program line span (first, last) of each prefix entry.
    pub entry_spans: Vec<(usize, usize)>,
    /// Whether the instrumented snippet is part of the program.
    pub with_snippet: bool,
}

/// Where a line of a composed program came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineOrigin {
    Prelude,
    Snippet(usize),
    Unknown,
}

impl Program {
    /// Index of the prefix entry that owns `program_line`.
    pub fn entry_at(&self, program_line: usize) -> Option<usize> {
        self.entry_spans
            .iter()
            .position(|(first, last)| (*first..=*last).contains(&program_line))
    }

    pub fn origin(&self, program_line: usize) -> LineOrigin {
        if program_line == 0 {
            return LineOrigin::Unknown;
        }
        if program_line <= self.prelude_lines {
            return LineOrigin::Prelude;
        }
        match self.line_map.get(program_line - self.prelude_lines - 1) {
            Some(Some(line)) => LineOrigin::Snippet(*line),
            _ => LineOrigin::Unknown,
        }
    }
}

pub fn instrument(snippet: &Snippet) -> Result<InstrumentedSnippet, InstrumentError> {
    let source = snippet.source();
    for reserved in [PROBE_NAME, TEMP_NAME, RUNTIME_MODULE] {
        if source.contains(reserved) {
            return Err(InstrumentError::ReservedName(reserved));
        }
    }
    let suite = parse_suite(source)?;
    let mut emitter = Emitter {
        source,
        index: LineIndex::new(source),
        out: Vec::new(),
        next_probe: 0,
        source_map: BTreeMap::new(),
    };
    emitter.block(&suite, 0);

    let expected: BTreeMap<ProbeId, usize> = snippet
        .statement_index()
        .iter()
        .map(|e| (e.probe_id, e.line))
        .collect();
    if emitter.source_map != expected {
        return Err(InstrumentError::IndexMismatch(format!(
            "emitted {} probes, index has {}",
            emitter.source_map.len(),
            expected.len()
        )));
    }

    let mut text = String::new();
    let mut line_map = Vec::with_capacity(emitter.out.len());
    for (line, origin) in emitter.out {
        text.push_str(&line);
        text.push('\n');
        line_map.push(origin);
    }
    Ok(InstrumentedSnippet {
        source: text,
        source_map: emitter.source_map,
        line_map,
    })
}

/// Runtime import, then the prefix imports and initializations, then the
/// instrumented snippet.
pub fn compose(prefix: &Prefix, inst: &InstrumentedSnippet) -> Program {
    let mut program = compose_entries(prefix);
    program.text.push_str(&inst.source);
    program.line_map = inst.line_map.clone();
    program.with_snippet = true;
    program
}

/// Program that runs the prefix on its own, used by post-processing.
pub fn compose_prefix_only(prefix: &Prefix) -> Program {
    compose_entries(prefix)
}

fn compose_entries(prefix: &Prefix) -> Program {
    let mut text = format!("from {RUNTIME_MODULE} import {PROBE_NAME}\n");
    let mut line = 1;
    let mut entry_spans = Vec::new();
    for entry in prefix.entries() {
        let entry = entry.trim_end_matches(['\n', '\r']);
        let count = entry.split('\n').count();
        entry_spans.push((line + 1, line + count));
        line += count;
        text.push_str(entry);
        text.push('\n');
    }
    Program {
        text,
        prelude_lines: line,
        line_map: Vec::new(),
        entry_spans,
        with_snippet: false,
    }
}

struct Emitter<'a> {
    source: &'a str,
    index: LineIndex,
    out: Vec<(String, Option<usize>)>,
    next_probe: u32,
    source_map: BTreeMap<ProbeId, usize>,
}

impl Emitter<'_> {
    fn alloc(&mut self, start: usize) -> ProbeId {
        self.next_probe += 1;
        let id = ProbeId(self.next_probe);
        self.source_map.insert(id, self.index.line_of(start));
        id
    }

    /// Emits `source[start..end]` with its first line at `level`; later
    /// lines are kept verbatim (they are continuation lines).
    fn text(&mut self, start: usize, end: usize, level: usize) {
        self.raw(&self.source[start..end].to_string(), self.index.line_of(start), level);
    }

    fn raw(&mut self, text: &str, first_line: usize, level: usize) {
        for (i, line) in text.split('\n').enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            let rendered = if i == 0 {
                format!("{}{line}", INDENT.repeat(level))
            } else {
                line.to_string()
            };
            self.out.push((rendered, Some(first_line + i)));
        }
    }

    fn synthetic(&mut self, text: &str, level: usize) {
        self.out.push((format!("{}{text}", INDENT.repeat(level)), None));
    }

    fn probe(&mut self, id: ProbeId, level: usize) {
        let line = self.source_map[&id];
        self.out
            .push((format!("{}{PROBE_NAME}({})", INDENT.repeat(level), id.0), Some(line)));
    }

    fn header_end(&self, start: usize, body: &[Stmt]) -> usize {
        let body_start = start_of(&body[0]);
        header_colon_end(self.source, start, body_start).unwrap_or(body_start)
    }

    fn block(&mut self, stmts: &[Stmt], level: usize) {
        for stmt in stmts {
            self.stmt(stmt, level);
        }
    }

    fn suite(&mut self, head: Option<ProbeId>, body: &[Stmt], level: usize) {
        if let Some(id) = head {
            self.probe(id, level);
        }
        self.block(body, level);
    }

    fn stmt(&mut self, stmt: &Stmt, level: usize) {
        let start = start_of(stmt);
        match stmt {
            Stmt::FunctionDef(s) => self.definition(start, &s.decorator_list, &s.body, level),
            Stmt::AsyncFunctionDef(s) => self.definition(start, &s.decorator_list, &s.body, level),
            Stmt::ClassDef(s) => self.definition(start, &s.decorator_list, &s.body, level),
            Stmt::If(s) => self.if_stmt(s, level),
            Stmt::While(s) => self.looping(start, &s.body, &s.orelse, level),
            Stmt::For(s) => self.looping(start, &s.body, &s.orelse, level),
            Stmt::AsyncFor(s) => self.looping(start, &s.body, &s.orelse, level),
            Stmt::With(s) => self.with(start, &s.body, level),
            Stmt::AsyncWith(s) => self.with(start, &s.body, level),
            Stmt::Try(s) => self.try_stmt(start, &s.body, &s.handlers, &s.orelse, &s.finalbody, level),
            Stmt::TryStar(s) => self.try_stmt(start, &s.body, &s.handlers, &s.orelse, &s.finalbody, level),
            Stmt::Match(s) => self.match_stmt(s, level),
            Stmt::Return(s) => {
                let id = self.alloc(start);
                match &s.value {
                    Some(value) => {
                        self.operand(value, level);
                        self.probe(id, level);
                        let line = self.index.line_of(start);
                        self.raw(&format!("return {TEMP_NAME}"), line, level);
                    }
                    None => {
                        self.probe(id, level);
                        self.text(start, end_of(stmt), level);
                    }
                }
            }
            Stmt::Raise(s) => {
                let id = self.alloc(start);
                let line = self.index.line_of(start);
                match (&s.exc, &s.cause) {
                    (Some(exc), None) => {
                        self.operand(exc, level);
                        self.probe(id, level);
                        self.raw(&format!("raise {TEMP_NAME}"), line, level);
                    }
                    (Some(exc), Some(cause)) => {
                        let exc_text = &self.source[start_of(&**exc)..end_of(&**exc)];
                        let cause_text = &self.source[start_of(&**cause)..end_of(&**cause)];
                        let assign = format!("{TEMP_NAME} = (({exc_text}), ({cause_text}))");
                        self.raw(&assign, self.index.line_of(start_of(&**exc)), level);
                        self.probe(id, level);
                        self.raw(&format!("raise {TEMP_NAME}[0] from {TEMP_NAME}[1]"), line, level);
                    }
                    _ => {
                        self.probe(id, level);
                        self.text(start, end_of(stmt), level);
                    }
                }
            }
            Stmt::Break(_) | Stmt::Continue(_) => {
                let id = self.alloc(start);
                self.probe(id, level);
                self.text(start, end_of(stmt), level);
            }
            _ => {
                let id = self.alloc(start);
                self.text(start, end_of(stmt), level);
                self.probe(id, level);
            }
        }
    }

    /// `__pfx_value__ = (<expr>)`; the parentheses keep unparenthesized
    /// tuples and yields valid.
    fn operand(&mut self, value: &ast::Expr, level: usize) {
        let text = &self.source[start_of(value)..end_of(value)];
        let assign = format!("{TEMP_NAME} = ({text})");
        self.raw(&assign, self.index.line_of(start_of(value)), level);
    }

    fn definition(&mut self, start: usize, decorators: &[ast::Expr], body: &[Stmt], level: usize) {
        let id = self.alloc(start);
        for decorator in decorators {
            let text = format!("@{}", &self.source[start_of(decorator)..end_of(decorator)]);
            self.raw(&text, self.index.line_of(start_of(decorator)), level);
        }
        let end = self.header_end(start, body);
        self.text(start, end, level);
        self.block(body, level + 1);
        self.probe(id, level);
    }

    fn if_stmt(&mut self, s: &ast::StmtIf, level: usize) {
        let start = s.start().to_usize();
        let id = self.alloc(start);
        let end = self.header_end(start, &s.body);
        let header = &self.source[start..end];
        let header = match header.strip_prefix("elif") {
            Some(rest) => format!("if{rest}"),
            None => header.to_string(),
        };
        self.raw(&header, self.index.line_of(start), level);
        self.suite(Some(id), &s.body, level + 1);
        if !s.orelse.is_empty() {
            self.synthetic("else:", level);
            self.suite(Some(id), &s.orelse, level + 1);
        }
    }

    fn looping(&mut self, start: usize, body: &[Stmt], orelse: &[Stmt], level: usize) {
        let id = self.alloc(start);
        let end = self.header_end(start, body);
        self.text(start, end, level);
        self.suite(Some(id), body, level + 1);
        if !orelse.is_empty() {
            self.synthetic("else:", level);
            self.suite(Some(id), orelse, level + 1);
        }
    }

    fn with(&mut self, start: usize, body: &[Stmt], level: usize) {
        let id = self.alloc(start);
        let end = self.header_end(start, body);
        self.text(start, end, level);
        self.suite(Some(id), body, level + 1);
    }

    fn try_stmt(
        &mut self,
        start: usize,
        body: &[Stmt],
        handlers: &[ast::ExceptHandler],
        orelse: &[Stmt],
        finalbody: &[Stmt],
        level: usize,
    ) {
        let id = self.alloc(start);
        let end = self.header_end(start, body);
        self.text(start, end, level);
        self.suite(Some(id), body, level + 1);
        for handler in handlers {
            let ast::ExceptHandler::ExceptHandler(h) = handler;
            let h_start = h.start().to_usize();
            let h_id = self.alloc(h_start);
            let h_end = self.header_end(h_start, &h.body);
            self.text(h_start, h_end, level);
            self.suite(Some(h_id), &h.body, level + 1);
        }
        if !orelse.is_empty() {
            self.synthetic("else:", level);
            self.block(orelse, level + 1);
        }
        if !finalbody.is_empty() {
            self.synthetic("finally:", level);
            self.block(finalbody, level + 1);
        }
    }

    fn match_stmt(&mut self, s: &ast::StmtMatch, level: usize) {
        let start = s.start().to_usize();
        let id = self.alloc(start);
        let first_case = start_of(&s.cases[0]);
        let end = header_colon_end(self.source, start, first_case).unwrap_or(first_case);
        self.text(start, end, level);
        for case in &s.cases {
            let c_start = start_of(case);
            let c_id = self.alloc(c_start);
            let c_end = self.header_end(c_start, &case.body);
            self.text(c_start, c_end, level + 1);
            self.probe(id, level + 2);
            self.suite(Some(c_id), &case.body, level + 2);
        }
    }
}

/// Removes probe lines from instrumented text.
pub fn strip_probes(instrumented: &str) -> String {
    let prefix = format!("{PROBE_NAME}(");
    instrumented
        .lines()
        .filter(|l| !l.trim_start().starts_with(&prefix))
        .map(|l| format!("{l}\n"))
        .collect()
}
