//! Expression evaluation over a [`Store`].
//!
//! Names resolve first through the store's frame stack, then through the
//! fields of the current object. Arithmetic and comparisons are strict and run
//! left to right.

pub mod builtins;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::ast::{BinaryOp, Expr, ExprKind, Literal, UnaryOp};
use crate::diag::Span;
use crate::parser::parse_expression;
use crate::store::Store;
use crate::value::{Interval, Loc, ObjId, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ErrorKind {
    #[error("division by zero")]
    DivisionByZero,
    #[error("null operand")]
    NullOperand,
    #[error("{function}: argument {argument} outside the domain")]
    DomainError { function: String, argument: String },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{name}` expects {expected} argument(s), got {got}")]
    ArityMismatch { name: String, expected: String, got: usize },
    #[error("Inf used in arithmetic")]
    InfArithmetic,
    #[error("numeric overflow")]
    NumericOverflow,
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("index {index} out of bounds for array of length {len}")]
    IndexOutOfBounds { index: i64, len: usize },
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("external functions nest too deeply")]
    RecursionLimit,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind}")]
pub struct EvalError {
    pub kind: ErrorKind,
    pub span: Span,
}

impl EvalError {
    pub fn new(kind: ErrorKind, span: Span) -> Self {
        EvalError { kind, span }
    }
}

impl ErrorKind {
    /// Variant name, used as the rule id of runtime diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            ErrorKind::DivisionByZero => "DivisionByZero",
            ErrorKind::NullOperand => "NullOperand",
            ErrorKind::DomainError { .. } => "DomainError",
            ErrorKind::UnknownFunction(_) => "UnknownFunction",
            ErrorKind::ArityMismatch { .. } => "ArityMismatch",
            ErrorKind::InfArithmetic => "InfArithmetic",
            ErrorKind::NumericOverflow => "NumericOverflow",
            ErrorKind::UnknownName(_) => "UnknownName",
            ErrorKind::TypeMismatch(_) => "TypeMismatch",
            ErrorKind::IndexOutOfBounds { .. } => "IndexOutOfBounds",
            ErrorKind::InvalidInterval(_) => "InvalidInterval",
            ErrorKind::RecursionLimit => "RecursionLimit",
        }
    }
}

type EResult<T> = Result<T, EvalError>;

/// A designer-supplied function bound from the command line.
///
/// `Name(a, b) = expr` names its parameters. `Name/n = expr` declares only the
/// arity; the arguments are then visible as `arg1` .. `argn`. Other identifiers
/// in the body resolve at the call site, so `Resiliency/3 = k*mass*abs(velocity)`
/// reads the caller's `k`, `mass` and `velocity`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalFn {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
}

impl ExternalFn {
    pub fn parse(def: &str) -> Result<ExternalFn, String> {
        let (head, body) = def.split_once('=').ok_or_else(|| format!("`{def}`: expected NAME/ARITY=EXPR"))?;
        let head = head.trim();
        let body = parse_expression(body.trim()).map_err(|d| format!("`{def}`: {}", d.message))?;
        let valid_ident = |s: &str| {
            s.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) && s.chars().all(|c| c.is_ascii_alphanumeric())
        };
        let (name, params) = if let Some((name, arity)) = head.split_once('/') {
            let n: usize = arity.trim().parse().map_err(|_| format!("`{def}`: bad arity `{arity}`"))?;
            (name.trim(), (1..=n).map(|i| format!("arg{i}")).collect())
        } else if let Some((name, rest)) = head.split_once('(') {
            let inner = rest.strip_suffix(')').ok_or_else(|| format!("`{def}`: missing `)`"))?;
            let params: Vec<String> =
                inner.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect();
            if let Some(bad) = params.iter().find(|p| !valid_ident(p)) {
                return Err(format!("`{def}`: bad parameter name `{bad}`"));
            }
            (name.trim(), params)
        } else {
            return Err(format!("`{def}`: expected NAME/ARITY=EXPR or NAME(params)=EXPR"));
        };
        if !valid_ident(name) {
            return Err(format!("`{def}`: bad function name `{name}`"));
        }
        Ok(ExternalFn { name: name.to_string(), params, body })
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// Lookup table for external functions; consulted after the built-ins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Externals {
    fns: BTreeMap<String, ExternalFn>,
}

impl Externals {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, f: ExternalFn) {
        self.fns.insert(f.name.clone(), f);
    }

    pub fn get(&self, name: &str) -> Option<&ExternalFn> {
        self.fns.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fns.contains_key(name)
    }
}

/// Where evaluation happens: the store plus the object `this` denotes.
#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    pub store: &'a Store,
    pub this: Option<ObjId>,
}

impl<'a> Ctx<'a> {
    pub fn new(store: &'a Store, this: Option<ObjId>) -> Self {
        Ctx { store, this }
    }

    pub fn lookup(&self, name: &str) -> Option<Loc> {
        self.store.lookup(name).or_else(|| self.this.and_then(|o| self.store.field(o, name)))
    }
}

const MAX_EXTERNAL_DEPTH: usize = 64;

#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    externals: Arc<Externals>,
    /// When positive, `==` and `!=` on numbers compare within this tolerance.
    eq_tol: f64,
}

struct Locals<'p> {
    vars: &'p [(String, Value)],
    depth: usize,
}

impl Locals<'_> {
    fn get(&self, name: &str) -> Option<&Value> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

const NO_LOCALS: Locals<'static> = Locals { vars: &[], depth: 0 };

impl Evaluator {
    pub fn new(externals: Externals) -> Self {
        Evaluator { externals: Arc::new(externals), eq_tol: 0.0 }
    }

    pub fn externals(&self) -> &Externals {
        &self.externals
    }

    /// A copy whose numeric equality tolerates differences up to `tol`.
    pub fn relaxed(&self, tol: f64) -> Self {
        Evaluator { externals: self.externals.clone(), eq_tol: tol }
    }

    pub fn eval(&self, e: &Expr, ctx: Ctx<'_>) -> EResult<Value> {
        self.eval_in(e, ctx, &NO_LOCALS)
    }

    pub fn eval_bool(&self, e: &Expr, ctx: Ctx<'_>) -> EResult<bool> {
        match self.eval(e, ctx)? {
            Value::Boolean(b) => Ok(b),
            Value::Null => Err(EvalError::new(ErrorKind::NullOperand, e.span)),
            v => Err(EvalError::new(ErrorKind::TypeMismatch(format!("expected Boolean, found {}", v.type_name())), e.span)),
        }
    }

    /// Conjunction of invariant entries; an empty list holds.
    pub fn eval_invariant(&self, items: &[Expr], ctx: Ctx<'_>) -> EResult<bool> {
        self.conjunction(items, ctx)
    }

    /// Conjunction of guard entries; an empty list holds.
    pub fn eval_condition(&self, items: &[Expr], ctx: Ctx<'_>) -> EResult<bool> {
        self.conjunction(items, ctx)
    }

    fn conjunction(&self, items: &[Expr], ctx: Ctx<'_>) -> EResult<bool> {
        let mut all = true;
        for e in items {
            all &= self.eval_bool(e, ctx)?;
        }
        Ok(all)
    }

    /// Resolves an assignable expression to its location.
    pub fn locate(&self, e: &Expr, ctx: Ctx<'_>) -> EResult<Loc> {
        match &e.kind {
            ExprKind::Var(n) => ctx.lookup(n).ok_or_else(|| EvalError::new(ErrorKind::UnknownName(n.clone()), e.span)),
            ExprKind::Field(base, f) => {
                let obj = self.object_of(base, ctx, &NO_LOCALS)?;
                ctx.store
                    .field(obj, f)
                    .ok_or_else(|| EvalError::new(ErrorKind::UnknownName(f.clone()), e.span))
            }
            ExprKind::Index(base, idx) => {
                let arr = self.eval_in(base, ctx, &NO_LOCALS)?;
                let i = self.eval_in(idx, ctx, &NO_LOCALS)?;
                index_loc(&arr, &i, e.span)
            }
            ExprKind::Dot { var, order, wrt: None } => {
                let loc = self.locate(var, ctx)?;
                ctx.store
                    .existing_derivative(loc, *order)
                    .ok_or_else(|| EvalError::new(ErrorKind::UnknownName(format!("dot({}, {order})", path_text(var))), e.span))
            }
            _ => Err(EvalError::new(ErrorKind::TypeMismatch("expression is not assignable".into()), e.span)),
        }
    }

    fn object_of(&self, base: &Expr, ctx: Ctx<'_>, locals: &Locals<'_>) -> EResult<ObjId> {
        let v = match &base.kind {
            ExprKind::This => {
                return ctx.this.ok_or_else(|| EvalError::new(ErrorKind::UnknownName("this".into()), base.span))
            }
            _ => self.eval_in(base, ctx, locals)?,
        };
        match v {
            Value::Reference(o) => Ok(o),
            Value::Null => Err(EvalError::new(ErrorKind::NullOperand, base.span)),
            v => Err(EvalError::new(ErrorKind::TypeMismatch(format!("{} has no fields", v.type_name())), base.span)),
        }
    }

    fn eval_in(&self, e: &Expr, ctx: Ctx<'_>, locals: &Locals<'_>) -> EResult<Value> {
        let err = |k| EvalError::new(k, e.span);
        match &e.kind {
            ExprKind::Lit(l) => Ok(match l {
                Literal::Integer(i) => Value::Integer(*i),
                Literal::Real(x) => Value::Real(*x),
                Literal::Boolean(b) => Value::Boolean(*b),
                Literal::Null => Value::Null,
                Literal::Inf => Value::Inf,
                Literal::NegInf => Value::NegInf,
            }),
            ExprKind::Var(n) => {
                if let Some(v) = locals.get(n) {
                    return Ok(v.clone());
                }
                let loc = ctx.lookup(n).ok_or_else(|| err(ErrorKind::UnknownName(n.clone())))?;
                Ok(ctx.store.read(loc).clone())
            }
            ExprKind::This => ctx.this.map(Value::Reference).ok_or_else(|| err(ErrorKind::UnknownName("this".into()))),
            ExprKind::Field(base, f) => {
                let obj = self.object_of(base, ctx, locals)?;
                let loc = ctx.store.field(obj, f).ok_or_else(|| err(ErrorKind::UnknownName(f.clone())))?;
                Ok(ctx.store.read(loc).clone())
            }
            ExprKind::Index(base, idx) => {
                let arr = self.eval_in(base, ctx, locals)?;
                let i = self.eval_in(idx, ctx, locals)?;
                Ok(ctx.store.read(index_loc(&arr, &i, e.span)?).clone())
            }
            ExprKind::Unary(op, inner) => {
                let v = self.eval_in(inner, ctx, locals)?;
                unary(*op, v).map_err(err)
            }
            ExprKind::Binary(op, a, b) => {
                let x = self.eval_in(a, ctx, locals)?;
                let y = self.eval_in(b, ctx, locals)?;
                self.binary(*op, x, y).map_err(err)
            }
            ExprKind::In(v, i) => {
                let x = self.eval_in(v, ctx, locals)?;
                let lo = self.eval_in(&i.lo, ctx, locals)?;
                let hi = self.eval_in(&i.hi, ctx, locals)?;
                let interval = Interval::new(lo, hi, i.lo_open, i.hi_open)
                    .map_err(|e| EvalError::new(ErrorKind::InvalidInterval(e.to_string()), i.span))?;
                eval_interval_membership(&x, &interval).map_err(err)
            }
            ExprKind::Call(name, args) => {
                let vals = args.iter().map(|a| self.eval_in(a, ctx, locals)).collect::<EResult<Vec<_>>>()?;
                self.call(name, vals, ctx, locals).map_err(|k| match k {
                    // errors raised inside an external body keep their own span
                    Ok(k) => err(k),
                    Err(inner) => inner,
                })
            }
            ExprKind::Dot { var, order, wrt: None } => {
                let loc = self.locate(var, ctx)?;
                let d = ctx.store.existing_derivative(loc, *order).ok_or_else(|| {
                    err(ErrorKind::UnknownName(format!("dot({}, {order})", path_text(var))))
                })?;
                Ok(ctx.store.read(d).clone())
            }
            ExprKind::Dot { wrt: Some(_), .. } => {
                Err(err(ErrorKind::TypeMismatch("derivative with respect to a variable cannot be evaluated".into())))
            }
            ExprKind::New(_) => Err(err(ErrorKind::TypeMismatch("object creation is a statement".into()))),
        }
    }

    /// `Ok(Err(..))` carries a fully spanned error from inside an external body.
    fn call(
        &self,
        name: &str,
        args: Vec<Value>,
        ctx: Ctx<'_>,
        locals: &Locals<'_>,
    ) -> Result<Value, Result<ErrorKind, EvalError>> {
        if let Some((min, max)) = builtins::arity(name) {
            if args.len() < min || max.is_some_and(|m| args.len() > m) {
                let expected = match max {
                    Some(m) if m == min => min.to_string(),
                    Some(m) => format!("{min} to {m}"),
                    None => format!("at least {min}"),
                };
                return Err(Ok(ErrorKind::ArityMismatch { name: name.into(), expected, got: args.len() }));
            }
            return builtins::call(name, &args).map_err(Ok);
        }
        let f = self.externals.get(name).ok_or_else(|| Ok(ErrorKind::UnknownFunction(name.into())))?;
        if f.arity() != args.len() {
            return Err(Ok(ErrorKind::ArityMismatch { name: name.into(), expected: f.arity().to_string(), got: args.len() }));
        }
        if locals.depth >= MAX_EXTERNAL_DEPTH {
            return Err(Ok(ErrorKind::RecursionLimit));
        }
        let vars: Vec<(String, Value)> = f.params.iter().cloned().zip(args).collect();
        let inner = Locals { vars: &vars, depth: locals.depth + 1 };
        self.eval_in(&f.body, ctx, &inner).map_err(Err)
    }

    fn binary(&self, op: BinaryOp, x: Value, y: Value) -> Result<Value, ErrorKind> {
        use BinaryOp::*;
        match op {
            And | Or | Xor => {
                let (a, b) = (bool_operand(&x)?, bool_operand(&y)?);
                Ok(Value::Boolean(match op {
                    And => a && b,
                    Or => a || b,
                    _ => a != b,
                }))
            }
            Eq | Ne => {
                let eq = self.equal(&x, &y)?;
                Ok(Value::Boolean(if op == Eq { eq } else { !eq }))
            }
            Lt | Le | Gt | Ge => {
                let ord = compare(&x, &y)?;
                Ok(Value::Boolean(match op {
                    Lt => ord.is_lt(),
                    Le => ord.is_le(),
                    Gt => ord.is_gt(),
                    _ => ord.is_ge(),
                }))
            }
            Add | Sub | Mul | Div => arith(op, &x, &y),
        }
    }

    fn equal(&self, x: &Value, y: &Value) -> Result<bool, ErrorKind> {
        match (x, y) {
            (Value::Null, _) | (_, Value::Null) => Err(ErrorKind::NullOperand),
            (Value::Boolean(a), Value::Boolean(b)) => Ok(a == b),
            (Value::Reference(a), Value::Reference(b)) => Ok(a == b),
            _ if x.is_number() && y.is_number() => {
                if self.eq_tol > 0.0 {
                    if let (Some(a), Some(b)) = (x.as_f64(), y.as_f64()) {
                        return Ok((a - b).abs() <= self.eq_tol);
                    }
                }
                Ok(compare(x, y)? == Ordering::Equal)
            }
            _ => Err(ErrorKind::TypeMismatch(format!("cannot compare {} with {}", x.type_name(), y.type_name()))),
        }
    }
}

fn path_text(e: &Expr) -> String {
    e.as_path().map(|p| p.join(".")).unwrap_or_else(|| "?".into())
}

fn index_loc(arr: &Value, idx: &Value, span: Span) -> EResult<Loc> {
    let locs = match arr {
        Value::Array(l) => l,
        Value::Null => return Err(EvalError::new(ErrorKind::NullOperand, span)),
        v => return Err(EvalError::new(ErrorKind::TypeMismatch(format!("{} is not an array", v.type_name())), span)),
    };
    let i = match idx {
        Value::Integer(i) => *i,
        Value::Null => return Err(EvalError::new(ErrorKind::NullOperand, span)),
        v => return Err(EvalError::new(ErrorKind::TypeMismatch(format!("index must be Integer, found {}", v.type_name())), span)),
    };
    if i < 1 || i as usize > locs.len() {
        return Err(EvalError::new(ErrorKind::IndexOutOfBounds { index: i, len: locs.len() }, span));
    }
    Ok(locs[(i - 1) as usize])
}

fn bool_operand(v: &Value) -> Result<bool, ErrorKind> {
    match v {
        Value::Boolean(b) => Ok(*b),
        Value::Null => Err(ErrorKind::NullOperand),
        v => Err(ErrorKind::TypeMismatch(format!("expected Boolean, found {}", v.type_name()))),
    }
}

fn compare(x: &Value, y: &Value) -> Result<Ordering, ErrorKind> {
    if x.is_null() || y.is_null() {
        return Err(ErrorKind::NullOperand);
    }
    x.compare_numbers(y)
        .ok_or_else(|| ErrorKind::TypeMismatch(format!("cannot order {} and {}", x.type_name(), y.type_name())))
}

fn unary(op: UnaryOp, v: Value) -> Result<Value, ErrorKind> {
    match (op, v) {
        (_, Value::Null) => Err(ErrorKind::NullOperand),
        (UnaryOp::Not, v) => Ok(Value::Boolean(!bool_operand(&v)?)),
        (UnaryOp::Plus, v) if v.is_number() => Ok(v),
        (UnaryOp::Neg, Value::Integer(i)) => i.checked_neg().map(Value::Integer).ok_or(ErrorKind::NumericOverflow),
        (UnaryOp::Neg, Value::Real(x)) => Ok(Value::Real(-x)),
        (UnaryOp::Neg, Value::Inf) => Ok(Value::NegInf),
        (UnaryOp::Neg, Value::NegInf) => Ok(Value::Inf),
        (_, v) => Err(ErrorKind::TypeMismatch(format!("sign applied to {}", v.type_name()))),
    }
}

fn arith(op: BinaryOp, x: &Value, y: &Value) -> Result<Value, ErrorKind> {
    if x.is_null() || y.is_null() {
        return Err(ErrorKind::NullOperand);
    }
    if matches!(x, Value::Inf | Value::NegInf) || matches!(y, Value::Inf | Value::NegInf) {
        return Err(ErrorKind::InfArithmetic);
    }
    if let (Value::Integer(a), Value::Integer(b)) = (x, y) {
        let r = match op {
            BinaryOp::Add => a.checked_add(*b),
            BinaryOp::Sub => a.checked_sub(*b),
            BinaryOp::Mul => a.checked_mul(*b),
            _ => {
                if *b == 0 {
                    return Err(ErrorKind::DivisionByZero);
                }
                return Ok(Value::Real(*a as f64 / *b as f64));
            }
        };
        return r.map(Value::Integer).ok_or(ErrorKind::NumericOverflow);
    }
    let (a, b) = match (x.as_f64(), y.as_f64()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(ErrorKind::TypeMismatch(format!(
                "arithmetic on {} and {}",
                x.type_name(),
                y.type_name()
            )))
        }
    };
    let r = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        _ => {
            if b == 0.0 {
                return Err(ErrorKind::DivisionByZero);
            }
            a / b
        }
    };
    if r.is_finite() {
        Ok(Value::Real(r))
    } else {
        Err(ErrorKind::NumericOverflow)
    }
}

/// Membership honoring openness flags and the ordering of the infinities.
pub fn eval_interval_membership(v: &Value, i: &Interval) -> Result<Value, ErrorKind> {
    if v.is_null() {
        return Err(ErrorKind::NullOperand);
    }
    i.contains(v)
        .map(Value::Boolean)
        .ok_or_else(|| ErrorKind::TypeMismatch(format!("`in` applied to {}", v.type_name())))
}

impl fmt::Display for ExternalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) = {}", self.name, self.params.join(", "), crate::pretty::pretty_expr(&self.body))
    }
}
