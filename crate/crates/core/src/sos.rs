//! Discrete execution: assignments, method activations, object creation and `Init`.
//!
//! Every write goes through [`Run`], which can record a [`StepRecord`] per
//! executed statement. Replaying the recorded writes in order over the store the
//! run started from reproduces the final values.

use std::fmt;

use thiserror::Error;

use crate::analyzer::ClassTable;
use crate::ast::*;
use crate::config::Prefix;
use crate::diag::Span;
use crate::eval::{Ctx, EvalError, Evaluator};
use crate::pretty::pretty_expr;
use crate::store::{FrameKind, Store, StoreError};
use crate::types::SemType;
use crate::value::{Loc, ObjId, Value};

/// Interpreter call depth limit. Reaching it in a debug build needs a native
/// stack of well over the default 8 MiB; see [`INTERPRETER_STACK`].
pub const DEFAULT_FRAME_LIMIT: usize = 1024;

/// Native stack size for threads that run the interpreter.
pub const INTERPRETER_STACK: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("write to constant `{name}`")]
    ConstantWrite { name: String, span: Span },
    #[error("`{name}` is written more than once by one parallel assignment")]
    WriteConflict { name: String, span: Span },
    #[error("no constructor of `{class}` takes {got} argument(s)")]
    Constructor { class: String, got: usize, span: Span },
    #[error("unknown class `{class}`")]
    UnknownClass { class: String, span: Span },
    #[error("call depth exceeds {limit}")]
    FrameLimit { limit: usize, span: Span },
    #[error("`{name}` is already declared in this scope")]
    Duplicate { name: String, span: Span },
    #[error("`{path}` does not name a Dynamic instance")]
    StartTarget { path: String, span: Span },
    #[error("statement cannot be executed as a discrete step")]
    NotExecutable { span: Span },
}

impl SosError {
    pub fn rule(&self) -> &'static str {
        match self {
            SosError::Eval(e) => e.kind.name(),
            SosError::ConstantWrite { .. } => "ConstantWrite",
            SosError::WriteConflict { .. } => "WriteConflict",
            SosError::Constructor { .. } => "runtime.constructor",
            SosError::UnknownClass { .. } => "runtime.unknown_class",
            SosError::FrameLimit { .. } => "FrameLimit",
            SosError::Duplicate { .. } => "runtime.duplicate",
            SosError::StartTarget { .. } => "runtime.start_target",
            SosError::NotExecutable { .. } => "runtime.not_executable",
        }
    }

    pub fn span(&self) -> Span {
        match self {
            SosError::Eval(e) => e.span,
            SosError::ConstantWrite { span, .. }
            | SosError::WriteConflict { span, .. }
            | SosError::Constructor { span, .. }
            | SosError::UnknownClass { span, .. }
            | SosError::FrameLimit { span, .. }
            | SosError::Duplicate { span, .. }
            | SosError::StartTarget { span, .. }
            | SosError::NotExecutable { span } => *span,
        }
    }
}

type SResult<T> = Result<T, SosError>;

/// One location change made by a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Write {
    pub target: String,
    pub loc: Loc,
    pub old: Value,
    pub new: Value,
}

/// A single executed step: where it ran, which rule fired, what it changed.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub prefix: Prefix,
    pub rule: &'static str,
    pub writes: Vec<Write>,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} {} :: {} ::", self.time, self.prefix, self.rule)?;
        for (i, w) in self.writes.iter().enumerate() {
            let sep = if i == 0 { " " } else { ", " };
            write!(f, "{sep}{}: {} -> {}", w.target, w.old, w.new)?;
        }
        Ok(())
    }
}

/// A started Dynamic: the component that owns it and the Dynamic object.
#[derive(Debug, Clone, PartialEq)]
pub struct Started {
    pub path: Vec<String>,
    pub owner: ObjId,
    pub dynamic: ObjId,
}

/// Mutable state threaded through a discrete execution.
#[derive(Debug)]
pub struct Run<'s> {
    pub store: &'s mut Store,
    pub prefix: Prefix,
    pub time: f64,
    pub log: Option<Vec<StepRecord>>,
    pub starts: Vec<Started>,
}

impl<'s> Run<'s> {
    pub fn new(store: &'s mut Store, prefix: Prefix) -> Self {
        Run { store, prefix, time: 0.0, log: None, starts: Vec::new() }
    }

    pub fn logging(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    fn record(&mut self, label: String, rule: &'static str, writes: Vec<Write>) {
        if let Some(log) = &mut self.log {
            log.push(StepRecord { time: self.time, prefix: self.prefix.extend(label), rule, writes });
        }
    }
}

enum Flow {
    Next,
    Return(Value),
}

/// Converts integers stored into real-typed locations.
pub fn coerce(ty: &SemType, v: Value) -> Value {
    match (ty.prim(), v) {
        (Some(PrimKind::Real), Value::Integer(i)) => Value::Real(i as f64),
        (_, v) => v,
    }
}

/// Applies recorded writes in order.
pub fn replay(store: &mut Store, records: &[StepRecord]) {
    for r in records {
        for w in &r.writes {
            store.init(w.loc, w.new.clone());
        }
    }
}

/// The discrete interpreter over a checked program.
#[derive(Debug, Clone)]
pub struct Sos<'p> {
    pub table: &'p ClassTable,
    pub eval: &'p Evaluator,
    pub frame_limit: usize,
}

impl<'p> Sos<'p> {
    pub fn new(table: &'p ClassTable, eval: &'p Evaluator) -> Self {
        Sos { table, eval, frame_limit: DEFAULT_FRAME_LIMIT }
    }

    fn class_of(&self, store: &Store, obj: ObjId) -> String {
        store.object(obj).class.clone()
    }

    fn write(&self, run: &mut Run<'_>, loc: Loc, v: Value, target: &str, span: Span) -> SResult<Write> {
        let v = coerce(run.store.type_of(loc), v);
        let canon = run.store.resolve(loc);
        match run.store.write(canon, v.clone()) {
            Ok(old) => Ok(Write { target: target.to_string(), loc: canon, old, new: v }),
            Err(StoreError::ConstantWrite(_)) => Err(SosError::ConstantWrite { name: target.into(), span }),
            Err(StoreError::UnknownName(n)) => Err(SosError::Eval(EvalError::new(crate::eval::ErrorKind::UnknownName(n), span))),
        }
    }

    /// Value of a right-hand side: user method calls and `new` are handled here,
    /// everything else by the evaluator.
    fn rhs(&self, run: &mut Run<'_>, e: &Expr, this: Option<ObjId>) -> SResult<Value> {
        match &e.kind {
            ExprKind::New(n) => {
                let TypeExpr::Named(class) = &n.class else {
                    return Err(SosError::UnknownClass { class: format!("{:?}", n.class), span: e.span });
                };
                Ok(Value::Reference(self.create_object(run, class, &n.args, this, e.span)?))
            }
            ExprKind::Call(name, args) if this.is_some_and(|o| self.user_method(run.store, o, name).is_some()) => {
                self.invoke_method(run, this.unwrap(), name, args, this, e.span)
            }
            _ => Ok(self.eval.eval(e, Ctx::new(run.store, this))?),
        }
    }

    fn user_method(&self, store: &Store, obj: ObjId, name: &str) -> Option<&'p MethodDecl> {
        let class = self.class_of(store, obj);
        self.table.methods(&class).into_iter().find(|m| m.kind == MethodKind::User && m.name == name)
    }

    /// `x = e`: evaluate, then write.
    pub fn exec_single_assignment(&self, run: &mut Run<'_>, lhs: &Expr, rhs: &Expr, this: Option<ObjId>) -> SResult<()> {
        let v = self.rhs(run, rhs, this)?;
        let loc = self.eval.locate(lhs, Ctx::new(run.store, this))?;
        let target = pretty_expr(lhs);
        let w = self.write(run, loc, v, &target, lhs.span)?;
        run.record(format!("{}={}", target, pretty_expr(rhs)), "assign", vec![w]);
        Ok(())
    }

    /// Runs a `Discrete` body. In parallel mode every right-hand side and target
    /// is evaluated in the entry store and two writes to one location conflict.
    pub fn exec_discrete(&self, run: &mut Run<'_>, body: &[Stmt], mode: AssignMode, this: Option<ObjId>) -> SResult<()> {
        match mode {
            AssignMode::Sequential => {
                run.store.push_frame(FrameKind::Method);
                let r = self.exec_block(run, body, this);
                run.store.pop_frame();
                r.map(|_| ())
            }
            AssignMode::Parallel => {
                let mut pending: Vec<(Loc, Value, String, Span)> = Vec::new();
                for s in body {
                    match s {
                        Stmt::Assign(pairs, _) => {
                            for (l, r) in pairs {
                                let v = self.eval.eval(r, Ctx::new(run.store, this))?;
                                let loc = run.store.resolve(self.eval.locate(l, Ctx::new(run.store, this))?);
                                let target = pretty_expr(l);
                                if pending.iter().any(|(p, ..)| *p == loc) {
                                    return Err(SosError::WriteConflict { name: target, span: l.span });
                                }
                                pending.push((loc, v, target, l.span));
                            }
                        }
                        Stmt::Skip(_) => {}
                        other => return Err(SosError::NotExecutable { span: other.span() }),
                    }
                }
                let mut writes = Vec::new();
                for (loc, v, target, span) in pending {
                    writes.push(self.write(run, loc, v, &target, span)?);
                }
                run.record("discrete()".into(), "assign-parallel", writes);
                Ok(())
            }
        }
    }

    fn exec_block(&self, run: &mut Run<'_>, body: &[Stmt], this: Option<ObjId>) -> SResult<Flow> {
        for s in body {
            if let Flow::Return(v) = self.exec_stmt(run, s, this)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn exec_stmt(&self, run: &mut Run<'_>, s: &Stmt, this: Option<ObjId>) -> SResult<Flow> {
        match s {
            Stmt::VarDecl(f) => {
                self.declare_variable(run, f, this)?;
            }
            Stmt::Assign(pairs, _) => {
                for (l, r) in pairs {
                    self.exec_single_assignment(run, l, r, this)?;
                }
            }
            Stmt::Start(p) => self.start(run, p, this)?,
            Stmt::ParallelStart(ps, _) => {
                for p in ps {
                    self.start(run, p, this)?;
                }
            }
            // synchronisation is wired statically when the model is flattened
            Stmt::Parallel(..) | Stmt::Skip(_) => {}
            Stmt::Return(e, _) => {
                let v = match e {
                    Some(e) => self.rhs(run, e, this)?,
                    None => Value::Null,
                };
                return Ok(Flow::Return(v));
            }
            Stmt::Call(e) => {
                self.rhs(run, e, this)?;
            }
            Stmt::Equation { span, .. } => return Err(SosError::NotExecutable { span: *span }),
            Stmt::Composition(c) => return Err(SosError::NotExecutable { span: c.span }),
            Stmt::Block(b) => return Err(SosError::NotExecutable { span: b.span }),
        }
        Ok(Flow::Next)
    }

    fn start(&self, run: &mut Run<'_>, p: &Path, this: Option<ObjId>) -> SResult<()> {
        let bad = || SosError::StartTarget { path: p.dotted(), span: p.span };
        let (last, owner_path) = p.segments.split_last().ok_or_else(bad)?;
        let mut owner = this.ok_or_else(bad)?;
        for seg in owner_path {
            let loc = run.store.field(owner, seg).ok_or_else(bad)?;
            owner = match run.store.read(loc) {
                Value::Reference(o) => *o,
                _ => return Err(bad()),
            };
        }
        let loc = run.store.field(owner, last).ok_or_else(bad)?;
        let Value::Reference(dynamic) = *run.store.read(loc) else { return Err(bad()) };
        let class = self.class_of(run.store, dynamic);
        if !self.table.type_implements(&SemType::Class(class), BuiltinInterface::Dynamic) {
            return Err(bad());
        }
        run.record(format!("{}.start()", p.dotted()), "start", Vec::new());
        run.starts.push(Started { path: p.segments.clone(), owner, dynamic });
        Ok(())
    }

    /// Declares locals in the current frame.
    pub fn declare_variable(&self, run: &mut Run<'_>, f: &FieldDecl, this: Option<ObjId>) -> SResult<()> {
        let ty = self.table.sem_type(&f.ty);
        for d in &f.declarators {
            if run.store.is_bound_in_current_frame(&d.name) {
                return Err(SosError::Duplicate { name: d.name.clone(), span: d.span });
            }
            let ty = if d.array { SemType::Array(Box::new(ty.clone())) } else { ty.clone() };
            let loc = run.store.fresh_location(ty);
            self.initialize(run, loc, d.init.as_ref(), this)?;
            if f.constant {
                run.store.set_constant(loc);
            }
            run.store.bind_alias(&d.name, loc);
        }
        Ok(())
    }

    fn initialize(&self, run: &mut Run<'_>, loc: Loc, init: Option<&Initializer>, this: Option<ObjId>) -> SResult<()> {
        let v = match init {
            None | Some(Initializer::Skip(_)) => return Ok(()),
            Some(Initializer::Expr(e)) => self.rhs(run, e, this)?,
            Some(Initializer::Array(items, _)) => {
                let elem = match run.store.type_of(loc) {
                    SemType::Array(t) => (**t).clone(),
                    t => t.clone(),
                };
                let mut locs = Vec::with_capacity(items.len());
                for e in items {
                    let v = self.rhs(run, e, this)?;
                    locs.push(run.store.fresh_with(coerce(&elem, v), elem.clone()));
                }
                Value::Array(locs)
            }
        };
        if let Value::Reference(o) = &v {
            let class = self.class_of(run.store, *o);
            run.store.set_type(loc, SemType::Class(class));
        }
        let v = coerce(run.store.type_of(loc), v);
        run.store.init(loc, v);
        Ok(())
    }

    /// Binds parameters in a fresh method frame. Primitive parameters get a copy;
    /// mathematic and reference parameters alias the argument's location when the
    /// argument is assignable.
    fn bind_params(&self, run: &mut Run<'_>, params: &[Param], args: &[Expr], caller: Option<ObjId>, span: Span) -> SResult<()> {
        let mut bound = Vec::with_capacity(params.len());
        for (p, a) in params.iter().zip(args) {
            let ty = self.table.sem_type(&p.ty);
            let aliased = if ty.is_primitive() { None } else { self.eval.locate(a, Ctx::new(run.store, caller)).ok() };
            let loc = match aliased {
                Some(l) => l,
                None => {
                    let v = self.rhs(run, a, caller)?;
                    let v = coerce(&ty, v);
                    run.store.fresh_with(v, ty)
                }
            };
            bound.push((p.name.clone(), loc));
        }
        if run.store.depth() >= self.frame_limit {
            return Err(SosError::FrameLimit { limit: self.frame_limit, span });
        }
        run.store.push_frame(FrameKind::Method);
        for (n, l) in bound {
            run.store.bind_alias(&n, l);
        }
        Ok(())
    }

    /// Calls a user method on `obj` and returns its result (`Null` without `return`).
    pub fn invoke_method(
        &self,
        run: &mut Run<'_>,
        obj: ObjId,
        name: &str,
        args: &[Expr],
        caller: Option<ObjId>,
        span: Span,
    ) -> SResult<Value> {
        let m = self.user_method(run.store, obj, name).ok_or_else(|| {
            SosError::Eval(EvalError::new(crate::eval::ErrorKind::UnknownFunction(name.into()), span))
        })?;
        if m.params.len() != args.len() {
            return Err(SosError::Eval(EvalError::new(
                crate::eval::ErrorKind::ArityMismatch { name: name.into(), expected: m.params.len().to_string(), got: args.len() },
                span,
            )));
        }
        self.bind_params(run, &m.params, args, caller, span)?;
        let saved = run.prefix.clone();
        run.prefix = run.prefix.extend(format!("{name}()"));
        let flow = self.exec_block(run, &m.body, Some(obj));
        self.end_method(run, saved, flow)
    }

    fn end_method(&self, run: &mut Run<'_>, saved: Prefix, flow: SResult<Flow>) -> SResult<Value> {
        run.store.pop_frame();
        run.prefix = saved;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Next => Ok(Value::Null),
        }
    }

    /// Allocates an object: fields, field initializers, then the constructor.
    /// `creator` is the object evaluating the `new`; an anonymous class also
    /// sees its fields.
    pub fn create_object(&self, run: &mut Run<'_>, class: &str, args: &[Expr], creator: Option<ObjId>, span: Span) -> SResult<ObjId> {
        if self.table.get(class).is_none() {
            return Err(SosError::UnknownClass { class: class.into(), span });
        }
        let ctors = self.table.constructors(class);
        let ctor = ctors.iter().find(|c| c.params.len() == args.len()).copied();
        if ctor.is_none() && !args.is_empty() {
            return Err(SosError::Constructor { class: class.into(), got: args.len(), span });
        }
        let obj = run.store.new_object(class);
        let fields = self.table.fields(class);
        for f in &fields {
            let loc = run.store.fresh_location(f.declared.clone());
            run.store.add_field(obj, &f.name, loc);
        }
        if let (Some(_), Some(outer)) = (self.table.outer(class), creator) {
            let outer_fields: Vec<(String, Loc)> =
                run.store.object(outer).fields.iter().map(|(n, l)| (n.clone(), *l)).collect();
            for (n, l) in outer_fields {
                if run.store.field(obj, &n).is_none() {
                    run.store.add_field(obj, &n, l);
                }
            }
        }
        for f in &fields {
            let loc = run.store.field(obj, &f.name).unwrap();
            self.initialize(run, loc, f.init.as_ref(), Some(obj))?;
        }
        if let Some(ctor) = ctor {
            self.bind_params(run, &ctor.params, args, creator, span)?;
            let saved = run.prefix.clone();
            run.prefix = run.prefix.extend(format!("{class}()"));
            let flow = self.exec_ctor(run, ctor, obj);
            self.end_method(run, saved, flow)?;
        }
        for f in fields.iter().filter(|f| f.constant) {
            let loc = run.store.field(obj, &f.name).unwrap();
            run.store.set_constant(loc);
        }
        Ok(obj)
    }

    fn exec_ctor(&self, run: &mut Run<'_>, ctor: &MethodDecl, obj: ObjId) -> SResult<Flow> {
        for s in &ctor.body {
            if let Stmt::Assign(pairs, _) = s {
                for (l, r) in pairs {
                    if let Some((field, param)) = self.wiring(ctor, l, r) {
                        let into = run.store.lookup(param).expect("parameter is bound");
                        let from = run.store.field(obj, field).expect("field exists");
                        run.store.unify(from, into);
                        run.record(format!("this.{field}={param}"), "alias", Vec::new());
                    } else {
                        self.exec_single_assignment(run, l, r, Some(obj))?;
                    }
                }
                continue;
            }
            if let Flow::Return(v) = self.exec_stmt(run, s, Some(obj))? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    /// `this.f = p` where `p` is a non-primitive parameter.
    fn wiring<'a>(&self, ctor: &'a MethodDecl, l: &'a Expr, r: &'a Expr) -> Option<(&'a str, &'a str)> {
        let ExprKind::Field(base, field) = &l.kind else { return None };
        if !matches!(base.kind, ExprKind::This) {
            return None;
        }
        let ExprKind::Var(p) = &r.kind else { return None };
        let param = ctor.params.iter().find(|q| &q.name == p)?;
        if self.table.sem_type(&param.ty).is_primitive() {
            return None;
        }
        Some((field, p))
    }

    /// Runs `Init` on the system object and returns the started Dynamics.
    pub fn run_init(&self, run: &mut Run<'_>, system: ObjId) -> SResult<Vec<Started>> {
        let class = self.class_of(run.store, system);
        let Some(init) = self.table.method(&class, MethodKind::Init) else { return Ok(Vec::new()) };
        run.store.push_frame(FrameKind::Method);
        let saved = run.prefix.clone();
        run.prefix = run.prefix.extend("init()");
        let flow = self.exec_block(run, &init.body, Some(system));
        self.end_method(run, saved, flow)?;
        Ok(std::mem::take(&mut run.starts))
    }
}
