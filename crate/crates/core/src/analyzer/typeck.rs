//! Name resolution and type checking.

use crate::ast::*;
use crate::diag::{Diagnostic, Span};
use crate::eval::builtins;
use crate::eval::Externals;
use crate::types::{is_subtype, SemType};

use super::table::ClassTable;

pub fn resolve_and_typecheck(t: &ClassTable, externals: &Externals) -> Vec<Diagnostic> {
    let mut cx = Checker { t, externals, out: Vec::new(), class: String::new(), locals: Vec::new(), in_ctor: false };
    for name in t.classes.keys() {
        cx.class = name.clone();
        cx.check_class();
    }
    cx.out
}

struct Local {
    name: String,
    ty: SemType,
    constant: bool,
}

struct Checker<'a> {
    t: &'a ClassTable,
    externals: &'a Externals,
    out: Vec<Diagnostic>,
    class: String,
    locals: Vec<Local>,
    in_ctor: bool,
}

fn describe(t: &Option<SemType>) -> String {
    t.as_ref().map_or("null".into(), |t| t.to_string())
}

impl Checker<'_> {
    fn error(&mut self, rule: &str, span: Span, msg: impl Into<String>) {
        self.out.push(Diagnostic::error(rule, span, msg));
    }

    fn assignable(&self, target: &SemType, source: &Option<SemType>) -> bool {
        match source {
            None => true,
            Some(s) => is_subtype(s, target, self.t),
        }
    }

    fn check_class(&mut self) {
        let decl = self.t.classes[&self.class].decl.clone();
        for m in &decl.members {
            match m {
                Member::Field(f) => {
                    let ty = self.t.sem_type(&f.ty);
                    for d in &f.declarators {
                        let target = if d.array { SemType::Array(Box::new(ty.clone())) } else { ty.clone() };
                        self.check_init(&target, d.init.as_ref(), d.span);
                    }
                }
                Member::Constructor(m) => self.method(m, true),
                Member::Method(m) => self.method(m, false),
                Member::Block(b) => {
                    for e in &b.items {
                        self.expect_bool(e);
                    }
                }
            }
        }
    }

    fn method(&mut self, m: &MethodDecl, ctor: bool) {
        self.in_ctor = ctor;
        self.locals.clear();
        for p in &m.params {
            let ty = self.t.sem_type(&p.ty);
            self.check_named_type(&p.ty, p.span);
            self.locals.push(Local { name: p.name.clone(), ty, constant: false });
        }
        for s in &m.body {
            self.stmt(s);
        }
        self.locals.clear();
        self.in_ctor = false;
    }

    fn check_named_type(&mut self, t: &TypeExpr, span: Span) {
        match t {
            TypeExpr::Named(n) if !self.t.classes.contains_key(n) && !self.t.is_interface(n) => {
                self.error("name.unknown", span, format!("unknown type `{n}`"));
            }
            TypeExpr::Array(inner) => self.check_named_type(inner, span),
            _ => {}
        }
    }

    fn check_init(&mut self, target: &SemType, init: Option<&Initializer>, span: Span) {
        match init {
            None => {}
            Some(Initializer::Skip(s)) => {
                if !self.t.type_implements(target, BuiltinInterface::Assignment) {
                    self.error("type.mismatch", *s, format!("Skip initializes only Assignment variables, not {target}"));
                }
            }
            Some(Initializer::Array(items, s)) => {
                let SemType::Array(elem) = target else {
                    self.error("type.mismatch", *s, format!("array initializer for non-array type {target}"));
                    return;
                };
                for e in items {
                    let ty = self.expr(e);
                    if !self.assignable(elem, &ty) {
                        self.error("type.mismatch", e.span, format!("cannot store {} in {}", describe(&ty), elem));
                    }
                }
            }
            Some(Initializer::Expr(e)) => {
                let ty = self.expr(e);
                if !self.assignable(target, &ty) {
                    self.error("type.mismatch", span, format!("cannot initialize {target} with {}", describe(&ty)));
                }
            }
        }
    }

    fn lookup(&self, name: &str) -> Option<(SemType, bool)> {
        if let Some(l) = self.locals.iter().rev().find(|l| l.name == name) {
            return Some((l.ty.clone(), l.constant));
        }
        self.t.visible_field(&self.class, name).map(|f| (f.effective, f.constant))
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::VarDecl(f) => {
                let ty = self.t.sem_type(&f.ty);
                for d in &f.declarators {
                    let target = if d.array { SemType::Array(Box::new(ty.clone())) } else { ty.clone() };
                    self.check_init(&target, d.init.as_ref(), d.span);
                    if self.locals.iter().any(|l| l.name == d.name) {
                        self.error("name.duplicate", d.span, format!("`{}` is already declared in this method", d.name));
                    }
                    let effective = match &d.init {
                        Some(Initializer::Expr(Expr { kind: ExprKind::New(n), .. })) => match &n.class {
                            TypeExpr::Named(c) if self.t.classes.contains_key(c) => SemType::Class(c.clone()),
                            _ => target.clone(),
                        },
                        _ => target.clone(),
                    };
                    self.locals.push(Local { name: d.name.clone(), ty: effective, constant: f.constant });
                }
            }
            Stmt::Assign(pairs, _) => {
                for (l, r) in pairs {
                    let lt = self.lvalue(l);
                    let rt = self.expr(r);
                    if let Some(lt) = lt {
                        if !self.assignable(&lt, &rt) {
                            self.error("type.mismatch", r.span, format!("cannot assign {} to {lt}", describe(&rt)));
                        }
                    }
                }
            }
            Stmt::Equation { lhs, rhs, .. } => {
                if let ExprKind::Dot { var, wrt, .. } = &lhs.kind {
                    let vt = self.expr(var);
                    if let Some(w) = wrt {
                        self.expr(w);
                    }
                    if vt.as_ref().is_some_and(|t| !t.is_numeric()) {
                        self.error("type.mismatch", var.span, format!("derivative of non-numeric {}", describe(&vt)));
                    }
                }
                let rt = self.expr(rhs);
                if rt.as_ref().is_some_and(|t| !t.is_numeric()) {
                    self.error("type.mismatch", rhs.span, format!("right-hand side of an equation must be numeric, found {}", describe(&rt)));
                }
            }
            Stmt::Return(Some(e), _) | Stmt::Call(e) => {
                self.expr(e);
            }
            Stmt::Composition(c) => {
                for s in &c.body {
                    self.stmt(s);
                }
            }
            Stmt::Block(b) => {
                for e in &b.items {
                    self.expect_bool(e);
                }
            }
            Stmt::Start(_) | Stmt::ParallelStart(..) | Stmt::Parallel(..) | Stmt::Skip(_) | Stmt::Return(None, _) => {}
        }
    }

    fn lvalue(&mut self, e: &Expr) -> Option<SemType> {
        let constant = match &e.kind {
            ExprKind::Var(n) => self.lookup(n).is_some_and(|(_, c)| c),
            ExprKind::Field(b, f) if matches!(b.kind, ExprKind::This) => {
                self.t.field(&self.class, f).is_some_and(|fi| fi.constant) && !self.in_ctor
            }
            ExprKind::Field(b, f) => match self.expr(b) {
                Some(SemType::Class(c)) => self.t.field(&c, f).is_some_and(|fi| fi.constant),
                _ => false,
            },
            ExprKind::Index(..) => false,
            _ => {
                self.error("type.mismatch", e.span, "left-hand side is not assignable");
                return None;
            }
        };
        if constant {
            let text = e.as_path().map(|p| p.join(".")).unwrap_or_default();
            self.error("type.constant_reassignment", e.span, format!("`{text}` is Constant and cannot be reassigned"));
        }
        self.expr(e)
    }

    fn expect_bool(&mut self, e: &Expr) {
        let t = self.expr(e);
        if t.as_ref().is_some_and(|t| !t.is_boolean()) {
            self.error("type.mismatch", e.span, format!("expected Boolean, found {}", describe(&t)));
        }
    }

    fn expect_numeric(&mut self, e: &Expr) -> Option<SemType> {
        let t = self.expr(e);
        if t.as_ref().is_some_and(|t| !t.is_numeric()) {
            self.error("type.mismatch", e.span, format!("expected a number, found {}", describe(&t)));
        }
        t
    }

    /// `None` means unknown or null; such expressions are not checked further.
    fn expr(&mut self, e: &Expr) -> Option<SemType> {
        match &e.kind {
            ExprKind::Lit(l) => match l {
                Literal::Integer(_) => Some(SemType::INTEGER),
                Literal::Real(_) | Literal::Inf | Literal::NegInf => Some(SemType::REAL),
                Literal::Boolean(_) => Some(SemType::BOOLEAN),
                Literal::Null => None,
            },
            ExprKind::Var(n) => match self.lookup(n) {
                Some((t, _)) => Some(t),
                None => {
                    self.error("name.unknown", e.span, format!("unknown name `{n}`"));
                    None
                }
            },
            ExprKind::This => Some(SemType::Class(self.class.clone())),
            ExprKind::Field(b, f) => {
                let bt = self.expr(b)?;
                match bt {
                    SemType::Class(c) => match self.t.field(&c, f) {
                        Some(fi) => Some(fi.effective),
                        None => {
                            self.error("name.unknown", e.span, format!("`{c}` has no field `{f}`"));
                            None
                        }
                    },
                    SemType::Interface(_) => None,
                    other => {
                        self.error("type.mismatch", b.span, format!("{other} has no fields"));
                        None
                    }
                }
            }
            ExprKind::Index(a, i) => {
                let at = self.expr(a);
                let it = self.expr(i);
                if it.as_ref().is_some_and(|t| t.prim() != Some(PrimKind::Integer)) {
                    self.error("type.mismatch", i.span, format!("array index must be Integer, found {}", describe(&it)));
                }
                match at {
                    Some(SemType::Array(el)) => Some(*el),
                    None => None,
                    Some(other) => {
                        self.error("type.mismatch", a.span, format!("{other} is not an array"));
                        None
                    }
                }
            }
            ExprKind::Unary(UnaryOp::Not, x) => {
                self.expect_bool(x);
                Some(SemType::BOOLEAN)
            }
            ExprKind::Unary(_, x) => self.expect_numeric(x),
            ExprKind::Binary(op, a, b) => {
                if op.is_logical() {
                    self.expect_bool(a);
                    self.expect_bool(b);
                    return Some(SemType::BOOLEAN);
                }
                if op.is_relational() {
                    let (at, bt) = (self.expr(a), self.expr(b));
                    if let (Some(x), Some(y)) = (&at, &bt) {
                        let eq_only = matches!(op, BinaryOp::Eq | BinaryOp::Ne);
                        let ok = (x.is_numeric() && y.is_numeric())
                            || (eq_only && x.is_boolean() && y.is_boolean())
                            || (eq_only && x.is_reference() && y.is_reference());
                        if !ok {
                            self.error("type.mismatch", e.span, format!("cannot compare {x} with {y} using {}", op.symbol()));
                        }
                    }
                    return Some(SemType::BOOLEAN);
                }
                let at = self.expect_numeric(a);
                let bt = self.expect_numeric(b);
                let both_int = [&at, &bt].iter().all(|t| t.as_ref().is_some_and(|t| t.prim() == Some(PrimKind::Integer)));
                Some(if both_int && *op != BinaryOp::Div { SemType::INTEGER } else { SemType::REAL })
            }
            ExprKind::In(x, i) => {
                self.expect_numeric(x);
                self.expect_numeric(&i.lo);
                self.expect_numeric(&i.hi);
                if let Err(msg) = crate::parser::check_interval_literals(i) {
                    self.error("interval.invalid", i.span, msg);
                }
                Some(SemType::BOOLEAN)
            }
            ExprKind::Call(name, args) => {
                let arg_types: Vec<Option<SemType>> = args.iter().map(|a| self.expr(a)).collect();
                if let Some((min, max)) = builtins::arity(name) {
                    if args.len() < min || max.is_some_and(|m| args.len() > m) {
                        self.error("function.arity", e.span, format!("`{name}` called with {} argument(s)", args.len()));
                    }
                    for (a, t) in args.iter().zip(&arg_types) {
                        if t.as_ref().is_some_and(|t| !t.is_numeric()) {
                            self.error("type.mismatch", a.span, format!("`{name}` expects numbers, found {}", describe(t)));
                        }
                    }
                    let all_int = arg_types.iter().all(|t| t.as_ref().is_some_and(|t| t.prim() == Some(PrimKind::Integer)));
                    return Some(match name.as_str() {
                        "round" | "floor" | "ceil" | "div" | "fld" | "rem" | "mod" | "gcd" | "lcm" | "sign" => SemType::INTEGER,
                        "abs" | "max" | "min" | "pow" if all_int => SemType::INTEGER,
                        _ => SemType::REAL,
                    });
                }
                let own = self.t.methods(&self.class).into_iter().find(|m| m.kind == MethodKind::User && &m.name == name);
                if let Some(m) = own {
                    if m.params.len() != args.len() {
                        self.error("function.arity", e.span, format!("`{name}` takes {} argument(s), called with {}", m.params.len(), args.len()));
                    }
                    // return values are untyped
                    return None;
                }
                match self.externals.get(name) {
                    Some(f) if f.arity() != args.len() => {
                        self.error("function.arity", e.span, format!("`{name}` is bound with {} parameter(s), called with {}", f.arity(), args.len()));
                        None
                    }
                    Some(_) => Some(SemType::REAL),
                    None => {
                        self.error(
                            "function.unbound",
                            e.span,
                            format!("function `{name}` is neither built in nor bound externally (use --define {name}/{}=EXPR)", args.len()),
                        );
                        None
                    }
                }
            }
            ExprKind::Dot { var, wrt, .. } => {
                if let Some(w) = wrt {
                    self.expr(w);
                }
                self.expect_numeric(var)
            }
            ExprKind::New(n) => self.new_expr(n, e.span),
        }
    }

    fn new_expr(&mut self, n: &NewExpr, span: Span) -> Option<SemType> {
        let arg_types: Vec<Option<SemType>> = n.args.iter().map(|a| self.expr(a)).collect();
        let class = match &n.class {
            TypeExpr::Named(c) if self.t.classes.contains_key(c) => c.clone(),
            TypeExpr::Named(c) => {
                self.error("name.unknown", span, format!("unknown class `{c}`"));
                return None;
            }
            other => {
                self.error("type.mismatch", span, format!("cannot instantiate {}", self.t.sem_type(other)));
                return None;
            }
        };
        let ctors = self.t.constructors(&class);
        if ctors.is_empty() {
            if !n.args.is_empty() {
                self.error("function.arity", span, format!("`{class}` has only the implicit empty constructor"));
            }
        } else {
            match ctors.iter().find(|k| k.params.len() == n.args.len()) {
                None => self.error("function.arity", span, format!("no constructor of `{class}` takes {} argument(s)", n.args.len())),
                Some(k) => {
                    let params: Vec<SemType> = k.params.iter().map(|p| self.t.sem_type(&p.ty)).collect();
                    for ((a, at), pt) in n.args.iter().zip(&arg_types).zip(&params) {
                        if !self.assignable(pt, at) {
                            self.error("type.mismatch", a.span, format!("argument of type {} passed for parameter of type {pt}", describe(at)));
                        }
                    }
                }
            }
        }
        Some(SemType::Class(class))
    }
}
