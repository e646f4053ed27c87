//! Enumeration of the executable statements of a snippet.
//!
//! Every executable statement becomes one coverage unit, numbered in source
//! pre-order starting at 1. Compound statement headers (`if`, `for`, `try`,
//! `def`, ...) and `except`/`case` clauses are units; `else:` and `finally:`
//! keywords are not.

use rustpython_parser::ast::{self, Ranged};

use serde::{Deserialize, Serialize};

use crate::source::{decorated_start, end_of, header_colon_end, start_of, LineIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Simple,
    /// `if`/`while`/`for`/`with`/`try`/`match` header.
    Header,
    /// `def` or `class`, credited once the definition completes.
    Definition,
    /// `except` or `case` clause.
    Clause,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unit {
    /// First source line of the statement.
    pub line: usize,
    /// Line whose end may carry a trailing comment for this unit.
    pub mark_line: usize,
    pub kind: UnitKind,
}

pub(crate) fn collect_units(source: &str, suite: &[ast::Stmt]) -> Vec<Unit> {
    let mut walker = UnitWalker {
        source,
        index: LineIndex::new(source),
        units: Vec::new(),
    };
    walker.block(suite);
    walker.units
}

struct UnitWalker<'a> {
    source: &'a str,
    index: LineIndex,
    units: Vec<Unit>,
}

impl UnitWalker<'_> {
    fn push(&mut self, start: usize, mark_end: usize, kind: UnitKind) {
        self.units.push(Unit {
            line: self.index.line_of(start),
            mark_line: self.index.line_of(mark_end.saturating_sub(1)),
            kind,
        });
    }

    fn header(&mut self, start: usize, body: &[ast::Stmt], kind: UnitKind) {
        let body_start = start_of(&body[0]);
        let colon = header_colon_end(self.source, start, body_start).unwrap_or(body_start);
        self.push(start, colon, kind);
    }

    fn block(&mut self, stmts: &[ast::Stmt]) {
        for stmt in stmts {
            self.stmt(stmt);
        }
    }

    fn stmt(&mut self, stmt: &ast::Stmt) {
        use ast::Stmt;
        let start = start_of(stmt);
        match stmt {
            Stmt::FunctionDef(s) => {
                let head = decorated_start(self.source, start, &s.decorator_list);
                self.definition(start, head, &s.body)
            }
            Stmt::AsyncFunctionDef(s) => {
                let head = decorated_start(self.source, start, &s.decorator_list);
                self.definition(start, head, &s.body)
            }
            Stmt::ClassDef(s) => {
                let head = decorated_start(self.source, start, &s.decorator_list);
                self.definition(start, head, &s.body)
            }
            Stmt::If(s) => {
                self.header(start, &s.body, UnitKind::Header);
                self.block(&s.body);
                self.block(&s.orelse);
            }
            Stmt::While(s) => {
                self.header(start, &s.body, UnitKind::Header);
                self.block(&s.body);
                self.block(&s.orelse);
            }
            Stmt::For(s) => {
                self.header(start, &s.body, UnitKind::Header);
                self.block(&s.body);
                self.block(&s.orelse);
            }
            Stmt::AsyncFor(s) => {
                self.header(start, &s.body, UnitKind::Header);
                self.block(&s.body);
                self.block(&s.orelse);
            }
            Stmt::With(s) => {
                self.header(start, &s.body, UnitKind::Header);
                self.block(&s.body);
            }
            Stmt::AsyncWith(s) => {
                self.header(start, &s.body, UnitKind::Header);
                self.block(&s.body);
            }
            Stmt::Try(s) => self.try_stmt(start, &s.body, &s.handlers, &s.orelse, &s.finalbody),
            Stmt::TryStar(s) => self.try_stmt(start, &s.body, &s.handlers, &s.orelse, &s.finalbody),
            Stmt::Match(s) => {
                let first_body = &s.cases[0].body;
                let case_start = start_of(&s.cases[0]);
                let colon = header_colon_end(self.source, start, case_start)
                    .unwrap_or_else(|| start_of(&first_body[0]));
                self.push(start, colon, UnitKind::Header);
                for case in &s.cases {
                    self.header(start_of(case), &case.body, UnitKind::Clause);
                    self.block(&case.body);
                }
            }
            _ => self.push(start, end_of(stmt), UnitKind::Simple),
        }
    }

    fn definition(&mut self, def_start: usize, head_start: usize, body: &[ast::Stmt]) {
        let body_start = start_of(&body[0]);
        let colon = header_colon_end(self.source, head_start, body_start).unwrap_or(body_start);
        self.push(def_start, colon, UnitKind::Definition);
        self.block(body);
    }

    fn try_stmt(
        &mut self,
        start: usize,
        body: &[ast::Stmt],
        handlers: &[ast::ExceptHandler],
        orelse: &[ast::Stmt],
        finalbody: &[ast::Stmt],
    ) {
        self.header(start, body, UnitKind::Header);
        self.block(body);
        for handler in handlers {
            let ast::ExceptHandler::ExceptHandler(h) = handler;
            self.header(h.start().to_usize(), &h.body, UnitKind::Clause);
            self.block(&h.body);
        }
        self.block(orelse);
        self.block(finalbody);
    }
}
