//! Static scope analysis: which names a snippet reads without defining, and
//! which attributes and methods are accessed on those names.
//!
//! Resolution follows the subject language's scoping rules. Inside a scope
//! that runs immediately (module, class body, comprehension, an
//! immediately-invoked lambda) a name counts as defined once some earlier
//! statement bound it, on any path. Inside a function body, which runs
//! later, enclosing scopes are consulted as a whole.

use std::collections::{BTreeSet, HashMap, HashSet};

use rustpython_parser::ast::{self, Expr, Ranged, Stmt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Snippet;
use crate::names::{is_builtin, is_module_dunder};
use crate::source::{parse_suite, SyntaxError};

#[derive(Debug, Error)]
#[error("analysis failed: {0}")]
pub struct AnalysisError(#[from] pub SyntaxError);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedRefs {
    /// Undefined names, in order of first occurrence.
    pub variables: Vec<String>,
    /// `base.attr` paths whose base is an undefined name, in order of first
    /// occurrence.
    pub members: Vec<String>,
    /// Entries of `variables` or `members` that appear as call targets.
    #[serde(default)]
    pub called: BTreeSet<String>,
    /// Constructs that bind names invisibly (star imports, `exec`), which may
    /// make some reported names false positives.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl UndefinedRefs {
    pub fn is_empty(&self) -> bool {
        self.variables.is_empty() && self.members.is_empty()
    }

    /// Members whose base is `variable`, attribute part only.
    pub fn members_of<'a>(&'a self, variable: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.members.iter().filter_map(move |m| {
            let (base, attr) = m.split_once('.')?;
            (base == variable).then_some(attr)
        })
    }
}

pub fn get_undefined_refs(snippet: &Snippet) -> Result<UndefinedRefs, AnalysisError> {
    analyze_source(snippet.source())
}

pub fn analyze_source(source: &str) -> Result<UndefinedRefs, AnalysisError> {
    let suite = parse_suite(source)?;
    let mut analyzer = Analyzer::default();
    let mut module = Frame::new(FrameKind::Module, false);
    collect_block(&suite, &mut module);
    module.all.extend(global_writes(&suite));
    analyzer.frames.push(module);
    analyzer.block(&suite);
    Ok(analyzer.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrameKind {
    Module,
    Class,
    Function,
    Comprehension,
}

#[derive(Debug)]
struct Frame {
    kind: FrameKind,
    /// Body runs after the point of definition (a `def` or a stored lambda).
    deferred: bool,
    /// Every name bound anywhere in this scope.
    all: HashSet<String>,
    /// Names bound so far in evaluation order.
    bound: HashSet<String>,
    globals: HashSet<String>,
    nonlocals: HashSet<String>,
}

impl Frame {
    fn new(kind: FrameKind, deferred: bool) -> Self {
        Frame {
            kind,
            deferred,
            all: HashSet::new(),
            bound: HashSet::new(),
            globals: HashSet::new(),
            nonlocals: HashSet::new(),
        }
    }

    fn is_function_like(&self) -> bool {
        matches!(self.kind, FrameKind::Function | FrameKind::Comprehension)
    }
}

#[derive(Default)]
struct Analyzer {
    frames: Vec<Frame>,
    /// (offset, name) of every undefined read.
    variables: Vec<(usize, String)>,
    /// (offset, base.attr) of member reads on undefined bases.
    members: Vec<(usize, String)>,
    /// base.attr paths assigned so far.
    stored_members: HashSet<String>,
    called: BTreeSet<String>,
    notes: Vec<String>,
}

impl Analyzer {
    fn finish(self) -> UndefinedRefs {
        fn ordered(mut items: Vec<(usize, String)>) -> Vec<String> {
            items.sort_by_key(|(offset, _)| *offset);
            let mut seen = HashSet::new();
            items
                .into_iter()
                .filter_map(|(_, name)| seen.insert(name.clone()).then_some(name))
                .collect()
        }
        let variables = ordered(self.variables);
        let members = ordered(self.members);
        let called = self
            .called
            .into_iter()
            .filter(|c| variables.contains(c) || members.contains(c))
            .collect();
        let mut notes = self.notes;
        notes.dedup();
        UndefinedRefs {
            variables,
            members,
            called,
            notes,
        }
    }

    fn top(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("module frame")
    }

    fn is_defined(&self, name: &str) -> bool {
        if is_builtin(name) || is_module_dunder(name) {
            return true;
        }
        let top = self.frames.len() - 1;
        let current = &self.frames[top];
        if current.globals.contains(name) {
            let module = &self.frames[0];
            return module.all.contains(name) || module.bound.contains(name);
        }
        if current.nonlocals.contains(name) {
            return self.frames[..top]
                .iter()
                .any(|f| f.kind == FrameKind::Function && f.all.contains(name));
        }
        if current.bound.contains(name) {
            return true;
        }
        if current.is_function_like() && current.all.contains(name) {
            // Local to this scope but read before any binding.
            return false;
        }
        if name == "__class__"
            && current.kind == FrameKind::Function
            && self.frames[..top].iter().any(|f| f.kind == FrameKind::Class)
        {
            return true;
        }
        let mut later = current.deferred;
        let skip_classes = current.kind != FrameKind::Class;
        for frame in self.frames[..top].iter().rev() {
            if !(skip_classes && frame.kind == FrameKind::Class) {
                let visible = if later {
                    frame.all.contains(name) || frame.bound.contains(name)
                } else {
                    frame.bound.contains(name)
                };
                if visible {
                    return true;
                }
            }
            later |= frame.deferred;
        }
        false
    }

    fn bind(&mut self, name: &str) {
        let top = self.frames.len() - 1;
        if self.frames[top].globals.contains(name) {
            self.frames[0].bound.insert(name.to_string());
        } else if self.frames[top].nonlocals.contains(name) {
            if let Some(f) = self.frames[..top]
                .iter_mut()
                .rev()
                .find(|f| f.kind == FrameKind::Function && f.all.contains(name))
            {
                f.bound.insert(name.to_string());
            }
        } else {
            self.frames[top].bound.insert(name.to_string());
        }
    }

    /// Walrus targets bind in the nearest enclosing non-comprehension scope.
    fn bind_walrus(&mut self, name: &str) {
        let idx = self
            .frames
            .iter()
            .rposition(|f| f.kind != FrameKind::Comprehension)
            .unwrap_or(0);
        self.frames[idx].bound.insert(name.to_string());
    }

    fn load(&mut self, name: &str, offset: usize) -> bool {
        let defined = self.is_defined(name);
        if !defined {
            self.variables.push((offset, name.to_string()));
        }
        defined
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for stmt in stmts {
            self.stmt(stmt);
        }
    }

    fn stmt(&mut self, stmt: &Stmt) {
        match stmt {
            Stmt::FunctionDef(s) => {
                self.function(&s.name, &s.args, &s.body, &s.decorator_list, s.returns.as_deref(), &s.type_params)
            }
            Stmt::AsyncFunctionDef(s) => {
                self.function(&s.name, &s.args, &s.body, &s.decorator_list, s.returns.as_deref(), &s.type_params)
            }
            Stmt::ClassDef(s) => {
                self.exprs(&s.decorator_list);
                self.exprs(&s.bases);
                for kw in &s.keywords {
                    self.expr(&kw.value);
                }
                let mut frame = Frame::new(FrameKind::Class, false);
                collect_block(&s.body, &mut frame);
                self.frames.push(frame);
                self.block(&s.body);
                self.frames.pop();
                self.bind(s.name.as_str());
            }
            Stmt::Return(s) => self.opt_expr(s.value.as_deref()),
            Stmt::Delete(s) => self.exprs(&s.targets),
            Stmt::Assign(s) => {
                self.expr(&s.value);
                for target in &s.targets {
                    self.target(target);
                }
            }
            Stmt::TypeAlias(s) => {
                self.expr(&s.value);
                self.target(&s.name);
            }
            Stmt::AugAssign(s) => {
                self.expr(&s.value);
                self.expr_in(&s.target, true);
                self.target(&s.target);
            }
            Stmt::AnnAssign(s) => {
                if self.top().kind != FrameKind::Function {
                    self.expr(&s.annotation);
                }
                if let Some(value) = &s.value {
                    self.expr(value);
                    self.target(&s.target);
                } else if !matches!(&*s.target, Expr::Name(_)) {
                    self.expr(&s.target);
                }
            }
            Stmt::For(s) => self.for_loop(&s.target, &s.iter, &s.body, &s.orelse),
            Stmt::AsyncFor(s) => self.for_loop(&s.target, &s.iter, &s.body, &s.orelse),
            Stmt::While(s) => {
                self.expr(&s.test);
                self.block(&s.body);
                self.block(&s.orelse);
            }
            Stmt::If(s) => {
                self.expr(&s.test);
                self.block(&s.body);
                self.block(&s.orelse);
            }
            Stmt::With(s) => self.with(&s.items, &s.body),
            Stmt::AsyncWith(s) => self.with(&s.items, &s.body),
            Stmt::Match(s) => {
                self.expr(&s.subject);
                for case in &s.cases {
                    self.pattern(&case.pattern);
                    self.opt_expr(case.guard.as_deref());
                    self.block(&case.body);
                }
            }
            Stmt::Raise(s) => {
                self.opt_expr(s.exc.as_deref());
                self.opt_expr(s.cause.as_deref());
            }
            Stmt::Try(s) => self.try_stmt(&s.body, &s.handlers, &s.orelse, &s.finalbody),
            Stmt::TryStar(s) => self.try_stmt(&s.body, &s.handlers, &s.orelse, &s.finalbody),
            Stmt::Assert(s) => {
                self.expr(&s.test);
                self.opt_expr(s.msg.as_deref());
            }
            Stmt::Import(s) => {
                for alias in &s.names {
                    let bound = match &alias.asname {
                        Some(asname) => asname.as_str(),
                        None => alias.name.as_str().split('.').next().unwrap_or_default(),
                    };
                    self.bind(bound);
                }
            }
            Stmt::ImportFrom(s) => {
                for alias in &s.names {
                    if alias.name.as_str() == "*" {
                        self.notes
                            .push("star import binds unknown names; reported names may be defined".into());
                        continue;
                    }
                    let bound = alias.asname.as_ref().unwrap_or(&alias.name);
                    self.bind(bound.as_str());
                }
            }
            // Declarations were applied when the frame was collected.
            Stmt::Global(_) | Stmt::Nonlocal(_) => {}
            Stmt::Expr(s) => self.expr(&s.value),
            Stmt::Pass(_) | Stmt::Break(_) | Stmt::Continue(_) => {}
        }
    }

    fn function(
        &mut self,
        name: &ast::Identifier,
        args: &ast::Arguments,
        body: &[Stmt],
        decorators: &[Expr],
        returns: Option<&Expr>,
        type_params: &[ast::TypeParam],
    ) {
        self.exprs(decorators);
        self.argument_defaults(args);
        for param in type_params {
            if let ast::TypeParam::TypeVar(tv) = param {
                self.opt_expr(tv.bound.as_deref());
            }
        }
        self.opt_expr(returns);
        // Bound before the body is visited so recursion resolves.
        self.bind(name.as_str());
        let mut frame = Frame::new(FrameKind::Function, true);
        for param in arg_names(args).chain(type_params.iter().map(type_param_name)) {
            frame.all.insert(param.to_string());
            frame.bound.insert(param.to_string());
        }
        collect_block(body, &mut frame);
        self.frames.push(frame);
        self.block(body);
        self.frames.pop();
    }

    fn argument_defaults(&mut self, args: &ast::Arguments) {
        for arg in args.posonlyargs.iter().chain(&args.args).chain(&args.kwonlyargs) {
            self.opt_expr(arg.default.as_deref());
            self.opt_expr(arg.def.annotation.as_deref());
        }
        for arg in args.vararg.iter().chain(args.kwarg.iter()) {
            self.opt_expr(arg.annotation.as_deref());
        }
    }

    fn lambda(&mut self, lambda: &ast::ExprLambda, immediate: bool) {
        self.argument_defaults(&lambda.args);
        let mut frame = Frame::new(FrameKind::Function, !immediate);
        for param in arg_names(&lambda.args) {
            frame.all.insert(param.to_string());
            frame.bound.insert(param.to_string());
        }
        collect_expr(&lambda.body, &mut frame);
        self.frames.push(frame);
        self.expr(&lambda.body);
        self.frames.pop();
    }

    fn for_loop(&mut self, target: &Expr, iter: &Expr, body: &[Stmt], orelse: &[Stmt]) {
        self.expr(iter);
        self.target(target);
        self.block(body);
        self.block(orelse);
    }

    fn with(&mut self, items: &[ast::WithItem], body: &[Stmt]) {
        for item in items {
            self.expr(&item.context_expr);
            if let Some(vars) = &item.optional_vars {
                self.target(vars);
            }
        }
        self.block(body);
    }

    fn try_stmt(&mut self, body: &[Stmt], handlers: &[ast::ExceptHandler], orelse: &[Stmt], finalbody: &[Stmt]) {
        self.block(body);
        for handler in handlers {
            let ast::ExceptHandler::ExceptHandler(h) = handler;
            self.opt_expr(h.type_.as_deref());
            if let Some(name) = &h.name {
                self.bind(name.as_str());
            }
            self.block(&h.body);
        }
        self.block(orelse);
        self.block(finalbody);
    }

    fn pattern(&mut self, pattern: &ast::Pattern) {
        use ast::Pattern;
        match pattern {
            Pattern::MatchValue(p) => self.expr(&p.value),
            Pattern::MatchSingleton(_) => {}
            Pattern::MatchSequence(p) => p.patterns.iter().for_each(|p| self.pattern(p)),
            Pattern::MatchMapping(p) => {
                self.exprs(&p.keys);
                p.patterns.iter().for_each(|p| self.pattern(p));
                if let Some(rest) = &p.rest {
                    self.bind(rest.as_str());
                }
            }
            Pattern::MatchClass(p) => {
                self.expr(&p.cls);
                p.patterns.iter().chain(&p.kwd_patterns).for_each(|p| self.pattern(p));
            }
            Pattern::MatchStar(p) => {
                if let Some(name) = &p.name {
                    self.bind(name.as_str());
                }
            }
            Pattern::MatchAs(p) => {
                if let Some(inner) = &p.pattern {
                    self.pattern(inner);
                }
                if let Some(name) = &p.name {
                    self.bind(name.as_str());
                }
            }
            Pattern::MatchOr(p) => p.patterns.iter().for_each(|p| self.pattern(p)),
        }
    }

    /// Binds the names of an assignment target; subscript and attribute
    /// targets evaluate their base expressions instead.
    fn target(&mut self, target: &Expr) {
        match target {
            Expr::Name(n) => self.bind(n.id.as_str()),
            Expr::Tuple(t) => t.elts.iter().for_each(|e| self.target(e)),
            Expr::List(l) => l.elts.iter().for_each(|e| self.target(e)),
            Expr::Starred(s) => self.target(&s.value),
            Expr::Attribute(a) => {
                self.expr(&a.value);
                if let Expr::Name(base) = &*a.value {
                    self.stored_members.insert(format!("{}.{}", base.id, a.attr));
                }
            }
            Expr::Subscript(s) => {
                self.expr(&s.value);
                self.expr(&s.slice);
            }
            other => self.expr(other),
        }
    }

    fn exprs(&mut self, exprs: &[Expr]) {
        for e in exprs {
            self.expr(e);
        }
    }

    fn opt_expr(&mut self, expr: Option<&Expr>) {
        if let Some(e) = expr {
            self.expr(e);
        }
    }

    fn expr(&mut self, expr: &Expr) {
        self.expr_in(expr, false)
    }

    /// `as_load` forces store-context attributes (augmented targets) to be
    /// treated as reads.
    fn expr_in(&mut self, expr: &Expr, as_load: bool) {
        match expr {
            Expr::Name(n) => {
                self.load(n.id.as_str(), n.start().to_usize());
            }
            Expr::Attribute(a) => self.attribute(a, as_load, false),
            Expr::Call(c) => {
                match &*c.func {
                    Expr::Name(n) => {
                        if n.id.as_str() == "exec" {
                            self.notes.push("exec binds unknown names; reported names may be defined".into());
                        }
                        self.called.insert(n.id.to_string());
                        self.expr(&c.func);
                    }
                    Expr::Attribute(a) => self.attribute(a, false, true),
                    Expr::Lambda(l) => self.lambda(l, true),
                    other => self.expr(other),
                }
                self.exprs(&c.args);
                for kw in &c.keywords {
                    self.expr(&kw.value);
                }
            }
            Expr::BoolOp(e) => self.exprs(&e.values),
            Expr::NamedExpr(e) => {
                self.expr(&e.value);
                if let Expr::Name(n) = &*e.target {
                    self.bind_walrus(n.id.as_str());
                }
            }
            Expr::BinOp(e) => {
                self.expr(&e.left);
                self.expr(&e.right);
            }
            Expr::UnaryOp(e) => self.expr(&e.operand),
            Expr::Lambda(l) => self.lambda(l, false),
            Expr::IfExp(e) => {
                self.expr(&e.test);
                self.expr(&e.body);
                self.expr(&e.orelse);
            }
            Expr::Dict(e) => {
                for (key, value) in e.keys.iter().zip(&e.values) {
                    if let Some(key) = key {
                        self.expr(key);
                    }
                    self.expr(value);
                }
            }
            Expr::Set(e) => self.exprs(&e.elts),
            Expr::ListComp(e) => self.comprehension(&e.generators, &[&e.elt]),
            Expr::SetComp(e) => self.comprehension(&e.generators, &[&e.elt]),
            Expr::GeneratorExp(e) => self.comprehension(&e.generators, &[&e.elt]),
            Expr::DictComp(e) => self.comprehension(&e.generators, &[&e.key, &e.value]),
            Expr::Await(e) => self.expr(&e.value),
            Expr::Yield(e) => self.opt_expr(e.value.as_deref()),
            Expr::YieldFrom(e) => self.expr(&e.value),
            Expr::Compare(e) => {
                self.expr(&e.left);
                self.exprs(&e.comparators);
            }
            Expr::FormattedValue(e) => {
                self.expr(&e.value);
                self.opt_expr(e.format_spec.as_deref());
            }
            Expr::JoinedStr(e) => self.exprs(&e.values),
            Expr::Constant(_) => {}
            Expr::Subscript(e) => {
                self.expr(&e.value);
                self.expr(&e.slice);
            }
            Expr::Starred(e) => self.expr(&e.value),
            Expr::List(e) => self.exprs(&e.elts),
            Expr::Tuple(e) => self.exprs(&e.elts),
            Expr::Slice(e) => {
                self.opt_expr(e.lower.as_deref());
                self.opt_expr(e.upper.as_deref());
                self.opt_expr(e.step.as_deref());
            }
        }
    }

    fn attribute(&mut self, attr: &ast::ExprAttribute, as_load: bool, called: bool) {
        let Expr::Name(base) = &*attr.value else {
            self.expr(&attr.value);
            return;
        };
        let defined = self.load(base.id.as_str(), base.start().to_usize());
        let path = format!("{}.{}", base.id, attr.attr);
        let reading = as_load || matches!(attr.ctx, ast::ExprContext::Load);
        if !defined && reading && !self.stored_members.contains(&path) {
            if called {
                self.called.insert(path.clone());
            }
            self.members.push((attr.start().to_usize(), path));
        }
    }

    fn comprehension(&mut self, generators: &[ast::Comprehension], elts: &[&Expr]) {
        // The first iterable is evaluated in the enclosing scope.
        self.expr(&generators[0].iter);
        let mut frame = Frame::new(FrameKind::Comprehension, false);
        for gen in generators {
            collect_target(&gen.target, &mut frame);
        }
        self.frames.push(frame);
        for (i, gen) in generators.iter().enumerate() {
            if i > 0 {
                self.expr(&gen.iter);
            }
            self.target(&gen.target);
            self.exprs(&gen.ifs);
        }
        for elt in elts {
            self.expr(elt);
        }
        self.frames.pop();
    }
}

fn arg_names(args: &ast::Arguments) -> impl Iterator<Item = &str> {
    args.posonlyargs
        .iter()
        .chain(&args.args)
        .chain(&args.kwonlyargs)
        .map(|a| a.def.arg.as_str())
        .chain(args.vararg.iter().map(|a| a.arg.as_str()))
        .chain(args.kwarg.iter().map(|a| a.arg.as_str()))
}

fn type_param_name(param: &ast::TypeParam) -> &str {
    match param {
        ast::TypeParam::TypeVar(p) => p.name.as_str(),
        ast::TypeParam::ParamSpec(p) => p.name.as_str(),
        ast::TypeParam::TypeVarTuple(p) => p.name.as_str(),
    }
}

/// Records every name bound directly in a scope's body (not in nested
/// scopes) and its `global`/`nonlocal` declarations.
fn collect_block(stmts: &[Stmt], frame: &mut Frame) {
    for stmt in stmts {
        collect_stmt(stmt, frame);
    }
}

fn collect_stmt(stmt: &Stmt, frame: &mut Frame) {
    match stmt {
        Stmt::FunctionDef(s) => {
            frame.all.insert(s.name.to_string());
            s.decorator_list.iter().for_each(|e| collect_expr(e, frame));
        }
        Stmt::AsyncFunctionDef(s) => {
            frame.all.insert(s.name.to_string());
            s.decorator_list.iter().for_each(|e| collect_expr(e, frame));
        }
        Stmt::ClassDef(s) => {
            frame.all.insert(s.name.to_string());
        }
        Stmt::Assign(s) => {
            s.targets.iter().for_each(|t| collect_target(t, frame));
            collect_expr(&s.value, frame);
        }
        Stmt::AugAssign(s) => collect_target(&s.target, frame),
        Stmt::AnnAssign(s) => collect_target(&s.target, frame),
        Stmt::TypeAlias(s) => collect_target(&s.name, frame),
        Stmt::Delete(s) => s.targets.iter().for_each(|t| collect_target(t, frame)),
        Stmt::For(s) => {
            collect_target(&s.target, frame);
            collect_block(&s.body, frame);
            collect_block(&s.orelse, frame);
        }
        Stmt::AsyncFor(s) => {
            collect_target(&s.target, frame);
            collect_block(&s.body, frame);
            collect_block(&s.orelse, frame);
        }
        Stmt::While(s) => {
            collect_expr(&s.test, frame);
            collect_block(&s.body, frame);
            collect_block(&s.orelse, frame);
        }
        Stmt::If(s) => {
            collect_expr(&s.test, frame);
            collect_block(&s.body, frame);
            collect_block(&s.orelse, frame);
        }
        Stmt::With(s) => {
            for item in &s.items {
                if let Some(v) = &item.optional_vars {
                    collect_target(v, frame);
                }
            }
            collect_block(&s.body, frame);
        }
        Stmt::AsyncWith(s) => {
            for item in &s.items {
                if let Some(v) = &item.optional_vars {
                    collect_target(v, frame);
                }
            }
            collect_block(&s.body, frame);
        }
        Stmt::Match(s) => {
            for case in &s.cases {
                collect_pattern(&case.pattern, frame);
                collect_block(&case.body, frame);
            }
        }
        Stmt::Try(s) => collect_try(&s.body, &s.handlers, &s.orelse, &s.finalbody, frame),
        Stmt::TryStar(s) => collect_try(&s.body, &s.handlers, &s.orelse, &s.finalbody, frame),
        Stmt::Import(s) => {
            for alias in &s.names {
                let bound = match &alias.asname {
                    Some(a) => a.to_string(),
                    None => alias.name.split('.').next().unwrap_or_default().to_string(),
                };
                frame.all.insert(bound);
            }
        }
        Stmt::ImportFrom(s) => {
            for alias in &s.names {
                if alias.name.as_str() != "*" {
                    frame.all.insert(alias.asname.as_ref().unwrap_or(&alias.name).to_string());
                }
            }
        }
        Stmt::Global(s) => frame.globals.extend(s.names.iter().map(|n| n.to_string())),
        Stmt::Nonlocal(s) => frame.nonlocals.extend(s.names.iter().map(|n| n.to_string())),
        Stmt::Expr(s) => collect_expr(&s.value, frame),
        Stmt::Return(s) => {
            if let Some(v) = &s.value {
                collect_expr(v, frame)
            }
        }
        _ => {}
    }
    for name in frame.globals.clone().iter().chain(frame.nonlocals.clone().iter()) {
        frame.all.remove(name);
    }
}

fn collect_try(body: &[Stmt], handlers: &[ast::ExceptHandler], orelse: &[Stmt], finalbody: &[Stmt], frame: &mut Frame) {
    collect_block(body, frame);
    for handler in handlers {
        let ast::ExceptHandler::ExceptHandler(h) = handler;
        if let Some(name) = &h.name {
            frame.all.insert(name.to_string());
        }
        collect_block(&h.body, frame);
    }
    collect_block(orelse, frame);
    collect_block(finalbody, frame);
}

fn collect_target(target: &Expr, frame: &mut Frame) {
    match target {
        Expr::Name(n) => {
            frame.all.insert(n.id.to_string());
        }
        Expr::Tuple(t) => t.elts.iter().for_each(|e| collect_target(e, frame)),
        Expr::List(l) => l.elts.iter().for_each(|e| collect_target(e, frame)),
        Expr::Starred(s) => collect_target(&s.value, frame),
        _ => {}
    }
}

fn collect_pattern(pattern: &ast::Pattern, frame: &mut Frame) {
    use ast::Pattern;
    match pattern {
        Pattern::MatchSequence(p) => p.patterns.iter().for_each(|p| collect_pattern(p, frame)),
        Pattern::MatchMapping(p) => {
            p.patterns.iter().for_each(|p| collect_pattern(p, frame));
            if let Some(rest) = &p.rest {
                frame.all.insert(rest.to_string());
            }
        }
        Pattern::MatchClass(p) => p
            .patterns
            .iter()
            .chain(&p.kwd_patterns)
            .for_each(|p| collect_pattern(p, frame)),
        Pattern::MatchStar(p) => {
            if let Some(name) = &p.name {
                frame.all.insert(name.to_string());
            }
        }
        Pattern::MatchAs(p) => {
            if let Some(inner) = &p.pattern {
                collect_pattern(inner, frame);
            }
            if let Some(name) = &p.name {
                frame.all.insert(name.to_string());
            }
        }
        Pattern::MatchOr(p) => p.patterns.iter().for_each(|p| collect_pattern(p, frame)),
        Pattern::MatchValue(_) | Pattern::MatchSingleton(_) => {}
    }
}

/// Walrus targets inside expressions of this scope (comprehensions included,
/// since their walrus targets leak into the enclosing scope).
fn collect_expr(expr: &Expr, frame: &mut Frame) {
    let mut walrus = Vec::new();
    walrus_targets(expr, &mut walrus);
    frame.all.extend(walrus);
}

fn walrus_targets(expr: &Expr, out: &mut Vec<String>) {
    match expr {
        Expr::NamedExpr(e) => {
            if let Expr::Name(n) = &*e.target {
                out.push(n.id.to_string());
            }
            walrus_targets(&e.value, out);
        }
        Expr::Lambda(_) => {}
        Expr::BoolOp(e) => e.values.iter().for_each(|v| walrus_targets(v, out)),
        Expr::BinOp(e) => {
            walrus_targets(&e.left, out);
            walrus_targets(&e.right, out);
        }
        Expr::UnaryOp(e) => walrus_targets(&e.operand, out),
        Expr::IfExp(e) => {
            walrus_targets(&e.test, out);
            walrus_targets(&e.body, out);
            walrus_targets(&e.orelse, out);
        }
        Expr::Call(e) => {
            walrus_targets(&e.func, out);
            e.args.iter().for_each(|a| walrus_targets(a, out));
            e.keywords.iter().for_each(|k| walrus_targets(&k.value, out));
        }
        Expr::Compare(e) => {
            walrus_targets(&e.left, out);
            e.comparators.iter().for_each(|c| walrus_targets(c, out));
        }
        Expr::ListComp(e) => {
            walrus_targets(&e.elt, out);
            e.generators.iter().for_each(|g| g.ifs.iter().for_each(|i| walrus_targets(i, out)));
        }
        Expr::SetComp(e) => {
            walrus_targets(&e.elt, out);
            e.generators.iter().for_each(|g| g.ifs.iter().for_each(|i| walrus_targets(i, out)));
        }
        Expr::GeneratorExp(e) => {
            walrus_targets(&e.elt, out);
            e.generators.iter().for_each(|g| g.ifs.iter().for_each(|i| walrus_targets(i, out)));
        }
        Expr::Tuple(e) => e.elts.iter().for_each(|v| walrus_targets(v, out)),
        Expr::List(e) => e.elts.iter().for_each(|v| walrus_targets(v, out)),
        Expr::Subscript(e) => {
            walrus_targets(&e.value, out);
            walrus_targets(&e.slice, out);
        }
        Expr::Attribute(e) => walrus_targets(&e.value, out),
        Expr::Starred(e) => walrus_targets(&e.value, out),
        _ => {}
    }
}

/// Names assigned inside functions under a `global` declaration; they
/// become module bindings once those functions run.
fn global_writes(suite: &[Stmt]) -> HashSet<String> {
    fn visit(stmts: &[Stmt], out: &mut HashSet<String>) {
        for stmt in stmts {
            let body = match stmt {
                Stmt::FunctionDef(s) => Some(&s.body),
                Stmt::AsyncFunctionDef(s) => Some(&s.body),
                Stmt::ClassDef(s) => Some(&s.body),
                _ => None,
            };
            if let Some(body) = body {
                let mut frame = Frame::new(FrameKind::Function, true);
                collect_block(body, &mut frame);
                // `collect_block` drops declared names from `all`, so the
                // written names are collected separately.
                let mut raw = HashMap::new();
                raw_bindings(body, &mut raw);
                out.extend(frame.globals.iter().filter(|g| raw.contains_key(*g)).cloned());
                visit(body, out);
            }
            for child in nested_blocks(stmt) {
                visit(child, out);
            }
        }
    }
    let mut out = HashSet::new();
    visit(suite, &mut out);
    out
}

fn raw_bindings(stmts: &[Stmt], out: &mut HashMap<String, ()>) {
    let mut frame = Frame::new(FrameKind::Function, true);
    for stmt in stmts {
        if !matches!(stmt, Stmt::Global(_) | Stmt::Nonlocal(_)) {
            collect_stmt(stmt, &mut frame);
        }
    }
    out.extend(frame.all.into_iter().map(|n| (n, ())));
}

fn nested_blocks(stmt: &Stmt) -> Vec<&[Stmt]> {
    match stmt {
        Stmt::If(s) => vec![&s.body, &s.orelse],
        Stmt::For(s) => vec![&s.body, &s.orelse],
        Stmt::AsyncFor(s) => vec![&s.body, &s.orelse],
        Stmt::While(s) => vec![&s.body, &s.orelse],
        Stmt::With(s) => vec![&s.body],
        Stmt::AsyncWith(s) => vec![&s.body],
        Stmt::Try(s) => {
            let mut v: Vec<&[Stmt]> = vec![&s.body, &s.orelse, &s.finalbody];
            for ast::ExceptHandler::ExceptHandler(h) in &s.handlers {
                v.push(&h.body);
            }
            v
        }
        Stmt::TryStar(s) => {
            let mut v: Vec<&[Stmt]> = vec![&s.body, &s.orelse, &s.finalbody];
            for ast::ExceptHandler::ExceptHandler(h) in &s.handlers {
                v.push(&h.body);
            }
            v
        }
        Stmt::Match(s) => s.cases.iter().map(|c| c.body.as_slice()).collect(),
        _ => Vec::new(),
    }
}
