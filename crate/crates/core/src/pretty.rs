//! Canonical source rendering of the AST. Output reparses to the same tree
//! (spans aside), which the round-trip tests rely on.

use crate::ast::*;
use std::fmt::Write;

pub fn pretty(unit: &CompilationUnit) -> String {
    let mut p = Printer::default();
    for (i, d) in unit.decls.iter().enumerate() {
        if i > 0 {
            p.out.push('\n');
        }
        match d {
            Decl::Class(c) => p.class(c),
            Decl::Interface(i) => p.interface(i),
        }
    }
    p.out
}

pub fn pretty_expr(e: &Expr) -> String {
    let mut p = Printer::default();
    p.expr(e, 0);
    p.out
}

#[derive(Default)]
struct Printer {
    out: String,
    indent: usize,
}

fn type_str(t: &TypeExpr) -> String {
    match t {
        TypeExpr::Primitive(k) => match k {
            PrimKind::Integer => "integer".into(),
            PrimKind::Real => "real".into(),
            PrimKind::Boolean => "boolean".into(),
        },
        TypeExpr::Mathematic(k) => match k {
            PrimKind::Integer => "Integer".into(),
            PrimKind::Real => "Real".into(),
            PrimKind::Boolean => "Boolean".into(),
        },
        TypeExpr::Interface(i) => i.name().into(),
        TypeExpr::Named(n) => n.clone(),
        TypeExpr::Array(inner) => format!("{}[]", type_str(inner)),
    }
}

/// Binding strength; larger binds tighter.
fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, ..) => match op {
            BinaryOp::Or => 1,
            BinaryOp::Xor => 2,
            BinaryOp::And => 3,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 6,
            BinaryOp::Add | BinaryOp::Sub => 7,
            BinaryOp::Mul | BinaryOp::Div => 8,
        },
        ExprKind::Unary(UnaryOp::Not, _) => 4,
        ExprKind::In(..) => 5,
        ExprKind::Unary(..) => 9,
        ExprKind::Lit(Literal::NegInf) => 9,
        _ => 10,
    }
}

fn real_lit(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e']) {
        s
    } else {
        format!("{s}.0")
    }
}

impl Printer {
    fn line(&mut self, s: &str) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn class(&mut self, c: &ClassDecl) {
        let head = match &c.head {
            ClassHead::TopLevel => "Class".to_string(),
            ClassHead::Implements(i) => i.name().to_string(),
            ClassHead::Extends(s) => s.clone(),
        };
        self.line(&format!("{head} {}{{", c.name));
        self.members(&c.members);
        self.line("}");
    }

    fn interface(&mut self, i: &InterfaceDecl) {
        self.line(&format!("Interface {}{{", i.name));
        self.indent += 1;
        for item in &i.items {
            match item {
                InterfaceItem::Method { name, .. } => self.line(&format!("{name}();")),
                InterfaceItem::Requires { name, lo, hi, ty, .. } => {
                    let hi = hi.map_or("*".to_string(), |h| h.to_string());
                    self.line(&format!("Requires {name}[{lo}..{hi}]: {};", type_str(ty)));
                }
                InterfaceItem::Constraint { name, .. } => self.line(&format!("Constraint {name};")),
                InterfaceItem::Block { kind, .. } => self.line(&format!("{}{{}};", kind.keyword())),
            }
        }
        self.indent -= 1;
        self.line("}");
    }

    fn members(&mut self, members: &[Member]) {
        self.indent += 1;
        for m in members {
            match m {
                Member::Field(f) => {
                    let s = self.field(f);
                    self.line(&s);
                }
                Member::Constructor(m) | Member::Method(m) => self.method(m),
                Member::Block(b) => self.block(b),
            }
        }
        self.indent -= 1;
    }

    fn field(&mut self, f: &FieldDecl) -> String {
        let mut s = String::new();
        if f.constant {
            s.push_str("Constant ");
        }
        s.push_str(&type_str(&f.ty));
        s.push(' ');
        for (i, d) in f.declarators.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&d.name);
            if d.array {
                s.push_str("[]");
            }
            match &d.init {
                None => {}
                Some(Initializer::Skip(_)) => s.push_str(" = Skip"),
                Some(Initializer::Array(items, _)) => {
                    let items: Vec<String> = items.iter().map(|e| self.sub(e)).collect();
                    write!(s, " = {{{}}}", items.join(", ")).unwrap();
                }
                Some(Initializer::Expr(e)) => {
                    s.push_str(" = ");
                    s.push_str(&self.sub(e));
                }
            }
        }
        s.push(';');
        s
    }

    /// Renders an expression that may span several lines (anonymous classes)
    /// at the current indentation.
    fn sub(&mut self, e: &Expr) -> String {
        let mut p = Printer { out: String::new(), indent: self.indent };
        p.expr(e, 0);
        p.out
    }

    fn method(&mut self, m: &MethodDecl) {
        let params: Vec<String> = m.params.iter().map(|p| format!("{} {}", type_str(&p.ty), p.name)).collect();
        self.line(&format!("{}({}){{", m.name, params.join(", ")));
        self.stmts(&m.body);
        self.line("}");
    }

    fn block(&mut self, b: &Block) {
        self.line(&format!("{}{{", b.kind.keyword()));
        self.indent += 1;
        for e in &b.items {
            let s = self.sub(e);
            self.line(&format!("{s};"));
        }
        self.indent -= 1;
        self.line("};");
    }

    fn slot(s: &Slot) -> String {
        match s {
            Slot::Empty => String::new(),
            Slot::Skip => "Skip".into(),
            Slot::Path(p) => p.dotted(),
        }
    }

    fn stmts(&mut self, body: &[Stmt]) {
        self.indent += 1;
        for s in body {
            self.stmt(s);
        }
        self.indent -= 1;
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::VarDecl(f) => {
                let s = self.field(f);
                self.line(&s);
            }
            Stmt::Assign(pairs, _) => {
                let parts: Vec<String> =
                    pairs.iter().map(|(l, r)| format!("{} = {}", self.sub(l), self.sub(r))).collect();
                self.line(&format!("{};", parts.join(", ")));
            }
            Stmt::Start(p) => self.line(&format!("{}.start();", p.dotted())),
            Stmt::ParallelStart(ps, _) => {
                for p in ps {
                    self.line(&format!("{}.start();", p.dotted()));
                }
            }
            Stmt::Parallel(ps, _) => {
                let parts: Vec<String> = ps.iter().map(Path::dotted).collect();
                self.line(&format!("{};", parts.join(" || ")));
            }
            Stmt::Skip(_) => self.line("Skip;"),
            Stmt::Return(e, _) => match e {
                Some(e) => {
                    let s = self.sub(e);
                    self.line(&format!("Return {s};"));
                }
                None => self.line("Return;"),
            },
            Stmt::Call(e) => {
                let s = self.sub(e);
                self.line(&format!("{s};"));
            }
            Stmt::Equation { lhs, rhs, .. } => {
                let (l, r) = (self.sub(lhs), self.sub(rhs));
                self.line(&format!("{l} == {r};"));
            }
            Stmt::Composition(c) => {
                self.line(&format!(
                    "{}({}, {}, {}){{",
                    c.name,
                    Self::slot(&c.source),
                    Self::slot(&c.action),
                    Self::slot(&c.target)
                ));
                self.stmts(&c.body);
                self.line("};");
            }
            Stmt::Block(b) => self.block(b),
        }
    }

    fn child(&mut self, e: &Expr, min: u8) {
        if prec(e) < min {
            self.out.push('(');
            self.expr(e, 0);
            self.out.push(')');
        } else {
            self.expr(e, min);
        }
    }

    fn expr(&mut self, e: &Expr, _min: u8) {
        match &e.kind {
            ExprKind::Lit(l) => {
                let s = match l {
                    Literal::Integer(i) => i.to_string(),
                    Literal::Real(x) => real_lit(*x),
                    Literal::Boolean(true) => "True".into(),
                    Literal::Boolean(false) => "False".into(),
                    Literal::Null => "null".into(),
                    Literal::Inf => "Inf".into(),
                    Literal::NegInf => "-Inf".into(),
                };
                self.out.push_str(&s);
            }
            ExprKind::Var(n) => self.out.push_str(n),
            ExprKind::This => self.out.push_str("this"),
            ExprKind::Field(b, f) => {
                self.child(b, 10);
                self.out.push('.');
                self.out.push_str(f);
            }
            ExprKind::Index(b, i) => {
                self.child(b, 10);
                self.out.push('[');
                self.expr(i, 0);
                self.out.push(']');
            }
            ExprKind::Unary(op, inner) => {
                let (sym, p) = match op {
                    UnaryOp::Plus => ("+", 9),
                    UnaryOp::Neg => ("-", 9),
                    UnaryOp::Not => ("!", 4),
                };
                self.out.push_str(sym);
                // keep `- -x` from lexing as something else and `-Inf` from folding
                let needs_paren = matches!(inner.kind, ExprKind::Unary(..) | ExprKind::Lit(Literal::Inf | Literal::NegInf))
                    && *op != UnaryOp::Not;
                if needs_paren {
                    self.out.push('(');
                    self.expr(inner, 0);
                    self.out.push(')');
                } else {
                    self.child(inner, p);
                }
            }
            ExprKind::Binary(op, a, b) => {
                let p = prec(e);
                self.child(a, p);
                write!(self.out, " {} ", op.symbol()).unwrap();
                self.child(b, p + 1);
            }
            ExprKind::In(a, i) => {
                self.child(a, 6);
                self.out.push_str(" in ");
                self.out.push(if i.lo_open { '(' } else { '[' });
                self.child(&i.lo, 7);
                self.out.push_str(", ");
                self.child(&i.hi, 7);
                self.out.push(if i.hi_open { ')' } else { ']' });
            }
            ExprKind::Call(name, args) => {
                self.out.push_str(name);
                self.args(args);
            }
            ExprKind::Dot { var, wrt, order } => {
                self.out.push_str("dot(");
                self.expr(var, 0);
                if let Some(w) = wrt {
                    self.out.push_str(", ");
                    self.expr(w, 0);
                }
                write!(self.out, ", {order})").unwrap();
            }
            ExprKind::New(n) => {
                self.out.push_str("new ");
                self.out.push_str(&type_str(&n.class));
                self.args(&n.args);
                if let Some(body) = &n.body {
                    self.out.push_str("{\n");
                    self.members(body);
                    for _ in 0..self.indent {
                        self.out.push_str("  ");
                    }
                    self.out.push('}');
                }
            }
        }
    }

    fn args(&mut self, args: &[Expr]) {
        self.out.push('(');
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.expr(a, 0);
        }
        self.out.push(')');
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_expression, parse_source};
    use proptest::prelude::*;

    fn roundtrip(src: &str) {
        let once = pretty(&parse_source(src).unwrap());
        let twice = pretty(&parse_source(&once).unwrap_or_else(|d| panic!("{d:?}\n{once}")));
        assert_eq!(once, twice);
    }

    #[test]
    fn corpus_round_trips() {
        for src in [
            include_str!("../models/bouncing_ball.apr"),
            include_str!("../models/bouncing_ball_corrected.apr"),
            include_str!("../models/bouncing_ball_plant_only.apr"),
        ] {
            roundtrip(src);
        }
    }

    #[test]
    fn expression_parenthesization() {
        for (src, want) in [
            ("(a + b) * c", "(a + b) * c"),
            ("a - (b - c)", "a - (b - c)"),
            ("-(-x)", "-(-x)"),
            ("!(a and b)", "!(a and b)"),
            ("(x < 1) in [0, 1]", "x < 1 in [0, 1]"),
            ("x in (-Inf, Inf)", "x in (-Inf, Inf)"),
        ] {
            assert_eq!(pretty_expr(&parse_expression(src).unwrap()), want);
        }
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            "[a-c]".prop_map(String::from),
            (0u32..100).prop_map(|n| n.to_string()),
            (0u32..1000).prop_map(|n| format!("{}.5", n)),
            Just("Inf".to_string()),
            Just("True".to_string()),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            let ops = prop_oneof![
                Just("+"), Just("-"), Just("*"), Just("/"), Just("=="), Just("<"),
                Just("and"), Just("or"), Just("xor"),
            ];
            prop_oneof![
                (inner.clone(), ops, inner.clone()).prop_map(|(a, o, b)| format!("({a} {o} {b})")),
                inner.clone().prop_map(|a| format!("-({a})")),
                inner.clone().prop_map(|a| format!("(!({a}))")),
                inner.clone().prop_map(|a| format!("(({a}) in [0, 1])")),
                (inner.clone(), inner).prop_map(|(a, b)| format!("max({a}, {b})")),
            ]
        })
    }

    fn strip(e: &Expr) -> String {
        // structural identity without spans
        format!("{:?}", e.kind).split("span:").count().to_string() + &pretty_expr(e)
    }

    proptest! {
        #[test]
        fn expressions_reparse_identically(src in arb_expr()) {
            let e = parse_expression(&src).unwrap();
            let printed = pretty_expr(&e);
            let again = parse_expression(&printed).unwrap();
            prop_assert_eq!(pretty_expr(&again), printed.clone());
            prop_assert_eq!(strip(&again), strip(&e));
        }
    }
}
