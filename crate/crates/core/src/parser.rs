//! Recursive-descent parser producing the [`ast`](crate::ast).
//!
//! Precedence, loosest first: `or`, `xor`, `and`, `!`, `in`, relational,
//! `+ -`, `* /`, unary `+ -`, postfix (`.f`, `[i]`, calls).

use crate::ast::*;
use crate::diag::{Diagnostic, Span};
use crate::lexer::{tokenize, Token, TokenKind};
use crate::value::{Interval, Value};

type PResult<T> = Result<T, Diagnostic>;

/// Tokenizes and parses in one go.
pub fn parse_source(source: &str) -> Result<CompilationUnit, Vec<Diagnostic>> {
    let toks = tokenize(source).map_err(|d| vec![d])?;
    parse_compilation_unit(&toks)
}

/// Parses a whole compilation unit. Comment tokens are skipped. On error the
/// parser resynchronizes at the next top-level declaration and keeps going, so
/// several diagnostics may be returned.
pub fn parse_compilation_unit(tokens: &[Token]) -> Result<CompilationUnit, Vec<Diagnostic>> {
    let mut p = Parser::new(tokens);
    let mut decls = Vec::new();
    let mut diags = Vec::new();
    while !p.at_eof() {
        let start = p.pos;
        match p.decl() {
            Ok(d) => decls.push(d),
            Err(e) => {
                diags.push(e);
                p.recover_top_level(start);
            }
        }
    }
    if diags.is_empty() {
        Ok(CompilationUnit { decls })
    } else {
        Err(diags)
    }
}

/// Parses a stand-alone interval `⌊e1, e2⌉`.
pub fn parse_interval(tokens: &[Token]) -> PResult<IntervalExpr> {
    let mut p = Parser::new(tokens);
    let i = p.interval()?;
    if !p.at_eof() {
        return Err(p.unexpected(&["end of input"]));
    }
    Ok(i)
}

/// Parses a stand-alone expression, as used by external function bindings.
pub fn parse_expression(source: &str) -> PResult<Expr> {
    let toks = tokenize(source)?;
    let mut p = Parser::new(&toks);
    let e = p.expr()?;
    if !p.at_eof() {
        return Err(p.unexpected(&["end of expression"]));
    }
    Ok(e)
}

/// Numeric value of a literal bound, folding unary signs.
pub fn literal_value(e: &Expr) -> Option<Value> {
    match &e.kind {
        ExprKind::Lit(Literal::Integer(i)) => Some(Value::Integer(*i)),
        ExprKind::Lit(Literal::Real(x)) => Some(Value::Real(*x)),
        ExprKind::Lit(Literal::Inf) => Some(Value::Inf),
        ExprKind::Lit(Literal::NegInf) => Some(Value::NegInf),
        ExprKind::Unary(UnaryOp::Plus, inner) => literal_value(inner),
        ExprKind::Unary(UnaryOp::Neg, inner) => match literal_value(inner)? {
            Value::Integer(i) => Some(Value::Integer(-i)),
            Value::Real(x) => Some(Value::Real(-x)),
            Value::Inf => Some(Value::NegInf),
            Value::NegInf => Some(Value::Inf),
            _ => None,
        },
        _ => None,
    }
}

/// Checks what can be checked without evaluation: openness against literal
/// bounds and literal ordering.
pub fn check_interval_literals(i: &IntervalExpr) -> Result<(), String> {
    let lo = literal_value(&i.lo);
    let hi = literal_value(&i.hi);
    let lo_inf = matches!(lo, Some(Value::NegInf));
    let hi_inf = matches!(hi, Some(Value::Inf));
    if i.lo_open && lo.is_some() && !lo_inf {
        return Err("finite open bound: a left-open bracket requires -Inf".into());
    }
    if i.hi_open && hi.is_some() && !hi_inf {
        return Err("finite open bound: a right-open bracket requires Inf".into());
    }
    if let (Some(lo), Some(hi)) = (lo, hi) {
        Interval::validate(&lo, &hi, i.lo_open, i.hi_open).map_err(|e| e.to_string())?;
    } else if (lo_inf && !i.lo_open) || (hi_inf && !i.hi_open) {
        return Err("infinite bound must use an open bracket".into());
    }
    Ok(())
}

struct Parser<'t> {
    toks: Vec<&'t Token>,
    pos: usize,
    /// Name of the class whose body is being parsed, for constructor detection.
    class_stack: Vec<String>,
}

const TYPE_KEYWORDS: &[&str] = &[
    "Real", "Integer", "Boolean", "real", "integer", "boolean", "System", "Plant", "Controller",
    "Dynamic", "Assignment", "ParallelAssignment", "SequentialAssignment",
];

const METHOD_KEYWORDS: &[&str] = &["Continuous", "Discrete", "Composition", "Init"];

impl<'t> Parser<'t> {
    fn new(tokens: &'t [Token]) -> Self {
        let toks: Vec<&Token> = tokens.iter().filter(|t| t.kind != TokenKind::Comment).collect();
        Parser { toks, pos: 0, class_stack: Vec::new() }
    }

    // --- token helpers -----------------------------------------------------

    fn peek(&self) -> &'t Token {
        self.peek_at(0)
    }

    fn peek_at(&self, n: usize) -> &'t Token {
        let i = (self.pos + n).min(self.toks.len() - 1);
        self.toks[i]
    }

    fn at_eof(&self) -> bool {
        self.peek().kind == TokenKind::Eof
    }

    fn bump(&mut self) -> &'t Token {
        let t = self.peek();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn check(&self, lexeme: &str) -> bool {
        let t = self.peek();
        matches!(t.kind, TokenKind::Punct | TokenKind::Operator | TokenKind::Keyword) && t.lexeme == lexeme
    }

    fn check_at(&self, n: usize, lexeme: &str) -> bool {
        let t = self.peek_at(n);
        matches!(t.kind, TokenKind::Punct | TokenKind::Operator | TokenKind::Keyword) && t.lexeme == lexeme
    }

    fn eat(&mut self, lexeme: &str) -> bool {
        if self.check(lexeme) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lexeme: &str) -> PResult<&'t Token> {
        if self.check(lexeme) {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&[lexeme]))
        }
    }

    fn ident(&mut self) -> PResult<&'t Token> {
        if self.peek().kind == TokenKind::Identifier {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&["identifier"]))
        }
    }

    fn unexpected(&self, expected: &[&str]) -> Diagnostic {
        let t = self.peek();
        let found = if t.kind == TokenKind::Eof { "end of input".to_string() } else { format!("`{}`", t.lexeme) };
        Diagnostic::error("syntax.expected", t.span, format!("unexpected {found}")).expecting(expected.iter().copied())
    }

    fn span_from(&self, start: Span) -> Span {
        let last = self.toks[self.pos.saturating_sub(1)];
        let end = last.span.end().max(start.offset);
        Span::new(start.line, start.col, start.offset, end - start.offset)
    }

    fn recover_top_level(&mut self, start: usize) {
        if self.pos == start {
            self.bump();
        }
        // Skip to the end of the current brace nesting, then past a `;`.
        let mut depth: i32 = 0;
        for t in &self.toks[..self.pos] {
            if t.is(TokenKind::Punct, "{") && self.toks.iter().position(|x| std::ptr::eq(*x, *t)).unwrap() >= start {
                depth += 1;
            }
            if t.is(TokenKind::Punct, "}") && self.toks.iter().position(|x| std::ptr::eq(*x, *t)).unwrap() >= start {
                depth -= 1;
            }
        }
        while !self.at_eof() && depth > 0 {
            if self.check("{") {
                depth += 1;
            } else if self.check("}") {
                depth -= 1;
            }
            self.bump();
        }
        self.eat(";");
    }

    // --- declarations ------------------------------------------------------

    fn decl(&mut self) -> PResult<Decl> {
        let t = self.peek();
        if t.is(TokenKind::Keyword, "Interface") {
            return self.interface_decl().map(Decl::Interface);
        }
        let head = if t.is(TokenKind::Keyword, "Class") {
            self.bump();
            ClassHead::TopLevel
        } else if t.kind == TokenKind::Keyword {
            match BuiltinInterface::from_name(&t.lexeme) {
                Some(i) => {
                    self.bump();
                    ClassHead::Implements(i)
                }
                None => return Err(self.unexpected(&["Class", "interface type", "class type", "Interface"])),
            }
        } else if t.kind == TokenKind::Identifier {
            self.bump();
            ClassHead::Extends(t.lexeme.clone())
        } else {
            return Err(self.unexpected(&["Class", "interface type", "class type", "Interface"]));
        };
        let name = self.ident()?;
        self.class_body(head, name.lexeme.clone(), t.span, false).map(Decl::Class)
    }

    fn class_body(&mut self, head: ClassHead, name: String, start: Span, anonymous: bool) -> PResult<ClassDecl> {
        self.expect("{")?;
        self.class_stack.push(name.clone());
        let mut members = Vec::new();
        while !self.check("}") {
            if self.at_eof() {
                self.class_stack.pop();
                return Err(self.unexpected(&["}"]));
            }
            match self.member() {
                Ok(m) => members.extend(m),
                Err(e) => {
                    self.class_stack.pop();
                    return Err(e);
                }
            }
        }
        self.class_stack.pop();
        self.expect("}")?;
        if !anonymous {
            self.eat(";");
        }
        Ok(ClassDecl { head, name, members, span: self.span_from(start), anonymous })
    }

    fn interface_decl(&mut self) -> PResult<InterfaceDecl> {
        let start = self.expect("Interface")?.span;
        let name = match self.peek().kind {
            TokenKind::Identifier | TokenKind::Keyword => self.bump().lexeme.clone(),
            _ => return Err(self.unexpected(&["interface name"])),
        };
        self.expect("{")?;
        let mut items = Vec::new();
        while !self.check("}") {
            let t = self.peek();
            if t.kind == TokenKind::Eof {
                return Err(self.unexpected(&["}"]));
            }
            if self.eat("Requires") {
                let n = self.ident()?;
                self.expect("[")?;
                let lo = self.multiplicity()?.unwrap_or(0);
                self.expect(".")?;
                self.expect(".")?;
                let hi = self.multiplicity()?;
                self.expect("]")?;
                self.expect(":")?;
                let ty = self.type_expr()?;
                self.expect(";")?;
                items.push(InterfaceItem::Requires { name: n.lexeme.clone(), lo, hi, ty, span: n.span });
            } else if self.eat("Constraint") {
                let n = self.ident()?;
                self.expect(";")?;
                items.push(InterfaceItem::Constraint { name: n.lexeme.clone(), span: n.span });
            } else if self.check("Invariant") || self.check("Condition") {
                let b = self.block()?;
                items.push(InterfaceItem::Block { kind: b.kind, span: b.span });
            } else if matches!(t.kind, TokenKind::Identifier | TokenKind::Keyword) && self.check_at(1, "(") {
                self.bump();
                self.expect("(")?;
                self.expect(")")?;
                if self.check("{") {
                    self.skip_braces()?;
                }
                self.expect(";")?;
                items.push(InterfaceItem::Method { name: t.lexeme.clone(), span: t.span });
            } else {
                return Err(self.unexpected(&["Requires", "Constraint", "method signature", "}"]));
            }
        }
        self.expect("}")?;
        self.eat(";");
        Ok(InterfaceDecl { name, items, span: self.span_from(start) })
    }

    fn multiplicity(&mut self) -> PResult<Option<u32>> {
        if self.eat("*") {
            return Ok(None);
        }
        let t = self.peek();
        if t.kind == TokenKind::IntegerLiteral {
            self.bump();
            return Ok(Some(t.lexeme.parse().unwrap_or(u32::MAX)));
        }
        Err(self.unexpected(&["integer", "*"]))
    }

    fn skip_braces(&mut self) -> PResult<()> {
        self.expect("{")?;
        let mut depth = 1;
        while depth > 0 {
            if self.at_eof() {
                return Err(self.unexpected(&["}"]));
            }
            if self.check("{") {
                depth += 1;
            } else if self.check("}") {
                depth -= 1;
            }
            self.bump();
        }
        Ok(())
    }

    fn is_type_start(&self, n: usize) -> bool {
        let t = self.peek_at(n);
        (t.kind == TokenKind::Keyword && TYPE_KEYWORDS.contains(&t.lexeme.as_str()))
            || (t.kind == TokenKind::Identifier
                && (self.peek_at(n + 1).kind == TokenKind::Identifier
                    || (self.check_at(n + 1, "[") && self.check_at(n + 2, "]"))))
    }

    fn member(&mut self) -> PResult<Vec<Member>> {
        let t = self.peek();
        if t.is(TokenKind::Keyword, "Class") || t.is(TokenKind::Keyword, "Interface") {
            return Err(Diagnostic::error(
                "class.nested",
                t.span,
                "class declarations may not be nested inside another class",
            )
            .expecting(["member declaration"]));
        }
        if self.check("Invariant") || self.check("Condition") {
            return Ok(vec![Member::Block(self.block()?)]);
        }
        if t.kind == TokenKind::Keyword && METHOD_KEYWORDS.contains(&t.lexeme.as_str()) && self.check_at(1, "(") {
            let kind = match t.lexeme.as_str() {
                "Continuous" => MethodKind::Continuous,
                "Discrete" => MethodKind::Discrete,
                "Composition" => MethodKind::Composition,
                _ => MethodKind::Init,
            };
            return Ok(vec![Member::Method(self.method(kind)?)]);
        }
        if t.kind == TokenKind::Identifier && self.check_at(1, "(") {
            let is_ctor = self.class_stack.last().is_some_and(|c| *c == t.lexeme);
            let m = self.method(MethodKind::User)?;
            return Ok(vec![if is_ctor { Member::Constructor(m) } else { Member::Method(m) }]);
        }
        if t.is(TokenKind::Keyword, "Constant") || self.is_type_start(0) {
            let d = self.field_decl(true)?;
            return Ok(vec![Member::Field(d)]);
        }
        Err(self.unexpected(&["field declaration", "constructor", "method", "Invariant", "Condition"]))
    }

    fn method(&mut self, kind: MethodKind) -> PResult<MethodDecl> {
        let name_tok = self.bump();
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.check(")") {
            loop {
                let ty = self.type_expr()?;
                let n = self.ident()?;
                params.push(Param { ty, name: n.lexeme.clone(), span: n.span });
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        self.expect("{")?;
        let body = self.stmts_until_brace(kind)?;
        self.expect("}")?;
        self.eat(";");
        Ok(MethodDecl {
            kind,
            name: name_tok.lexeme.clone(),
            params,
            body,
            span: self.span_from(name_tok.span),
            mode: None,
        })
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        let t = self.peek();
        let base = match (t.kind, t.lexeme.as_str()) {
            (TokenKind::Keyword, "Real") => TypeExpr::Mathematic(PrimKind::Real),
            (TokenKind::Keyword, "Integer") => TypeExpr::Mathematic(PrimKind::Integer),
            (TokenKind::Keyword, "Boolean") => TypeExpr::Mathematic(PrimKind::Boolean),
            (TokenKind::Keyword, "real") => TypeExpr::Primitive(PrimKind::Real),
            (TokenKind::Keyword, "integer") => TypeExpr::Primitive(PrimKind::Integer),
            (TokenKind::Keyword, "boolean") => TypeExpr::Primitive(PrimKind::Boolean),
            (TokenKind::Keyword, s) if BuiltinInterface::from_name(s).is_some() => {
                TypeExpr::Interface(BuiltinInterface::from_name(s).unwrap())
            }
            (TokenKind::Identifier, s) => TypeExpr::Named(s.to_string()),
            _ => return Err(self.unexpected(&["type"])),
        };
        self.bump();
        let mut ty = base;
        while self.check("[") && self.check_at(1, "]") {
            self.bump();
            self.bump();
            ty = TypeExpr::Array(Box::new(ty));
        }
        Ok(ty)
    }

    fn field_decl(&mut self, in_class: bool) -> PResult<FieldDecl> {
        let start = self.peek().span;
        let constant = self.eat("Constant");
        let ty = self.type_expr()?;
        let mut declarators = Vec::new();
        loop {
            let n = self.ident()?;
            if in_class && self.check("{") {
                return Err(Diagnostic::error(
                    "class.nested",
                    n.span,
                    format!("class `{}` declared inside another class", n.lexeme),
                )
                .expecting([";", "="]));
            }
            let mut array = false;
            if self.check("[") && self.check_at(1, "]") {
                self.bump();
                self.bump();
                array = true;
            }
            let init = if self.eat("=") { Some(self.initializer()?) } else { None };
            declarators.push(Declarator { name: n.lexeme.clone(), array, init, span: self.span_from(n.span) });
            if !self.eat(",") {
                break;
            }
        }
        self.expect(";")?;
        Ok(FieldDecl { constant, ty, declarators, span: self.span_from(start) })
    }

    fn initializer(&mut self) -> PResult<Initializer> {
        let t = self.peek();
        if self.eat("Skip") {
            return Ok(Initializer::Skip(t.span));
        }
        if self.eat("{") {
            let mut items = Vec::new();
            if !self.check("}") {
                loop {
                    items.push(self.expr()?);
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.expect("}")?;
            return Ok(Initializer::Array(items, self.span_from(t.span)));
        }
        Ok(Initializer::Expr(self.expr()?))
    }

    fn block(&mut self) -> PResult<Block> {
        let t = self.bump();
        let kind = if t.lexeme == "Invariant" { BlockKind::Invariant } else { BlockKind::Condition };
        self.expect("{")?;
        let mut items = Vec::new();
        while !self.check("}") {
            if self.at_eof() {
                return Err(self.unexpected(&["}"]));
            }
            items.push(self.expr()?);
            self.expect(";")?;
        }
        self.expect("}")?;
        self.expect(";")?;
        Ok(Block { kind, items, span: self.span_from(t.span) })
    }

    // --- statements --------------------------------------------------------

    fn stmts_until_brace(&mut self, ctx: MethodKind) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        while !self.check("}") {
            if self.at_eof() {
                return Err(self.unexpected(&["}"]));
            }
            out.push(self.stmt(ctx)?);
        }
        Ok(out)
    }

    /// `a.b.start();` lookahead.
    fn looks_like_start(&self) -> bool {
        let mut n = 0;
        loop {
            let t = self.peek_at(n);
            if !(t.kind == TokenKind::Identifier || t.is(TokenKind::Keyword, "this")) {
                return false;
            }
            if !self.check_at(n + 1, ".") {
                return false;
            }
            if self.check_at(n + 2, "start") {
                return self.check_at(n + 3, "(") && self.check_at(n + 4, ")");
            }
            n += 2;
        }
    }

    fn path(&mut self) -> PResult<Path> {
        let first = self.peek();
        let mut segments = Vec::new();
        if self.eat("this") {
            segments.push("this".to_string());
        } else {
            segments.push(self.ident()?.lexeme.clone());
        }
        while self.check(".") && self.peek_at(1).kind == TokenKind::Identifier {
            self.bump();
            segments.push(self.bump().lexeme.clone());
        }
        Ok(Path { segments, span: self.span_from(first.span) })
    }

    fn stmt(&mut self, ctx: MethodKind) -> PResult<Stmt> {
        let t = self.peek();
        if self.check("Invariant") || self.check("Condition") {
            return Ok(Stmt::Block(self.block()?));
        }
        if self.eat("Skip") {
            self.expect(";")?;
            return Ok(Stmt::Skip(t.span));
        }
        if self.eat("Return") {
            let e = if self.check(";") { None } else { Some(self.expr()?) };
            self.expect(";")?;
            return Ok(Stmt::Return(e, self.span_from(t.span)));
        }
        if t.is(TokenKind::Keyword, "Class") || (self.is_type_start(0) && self.check_at(2, "{")) {
            let at = if t.kind == TokenKind::Keyword && t.lexeme == "Class" { t.span } else { self.peek_at(1).span };
            return Err(Diagnostic::error("class.nested", at, "class declarations may not be nested")
                .expecting(["statement"]));
        }
        if ctx == MethodKind::Composition && t.kind == TokenKind::Identifier && self.check_at(1, "(") {
            return self.composition_entry().map(Stmt::Composition);
        }
        if self.looks_like_start() {
            let mut path = self.path()?;
            // the `.start` is not part of the path
            self.expect(".")?;
            self.expect("start")?;
            self.expect("(")?;
            self.expect(")")?;
            self.expect(";")?;
            path.span = self.span_from(path.span);
            return Ok(Stmt::Start(path));
        }
        if t.is(TokenKind::Keyword, "Constant") || self.is_type_start(0) {
            return Ok(Stmt::VarDecl(self.field_decl(false)?));
        }
        let e = self.expr()?;
        if self.check("||") {
            let first = path_of(&e).ok_or_else(|| {
                Diagnostic::error("syntax.parallel", e.span, "operands of `||` must be names").expecting(["name"])
            })?;
            let mut paths = vec![first];
            while self.eat("||") {
                paths.push(self.path()?);
            }
            self.expect(";")?;
            return Ok(Stmt::Parallel(paths, self.span_from(t.span)));
        }
        if self.check("=") {
            let mut pairs = Vec::new();
            let mut lhs = e;
            loop {
                self.expect("=")?;
                let rhs = self.expr()?;
                pairs.push((lhs, rhs));
                if !self.eat(",") {
                    break;
                }
                lhs = self.expr()?;
            }
            self.expect(";")?;
            return Ok(Stmt::Assign(pairs, self.span_from(t.span)));
        }
        self.expect(";")?;
        match e.kind {
            ExprKind::Binary(BinaryOp::Eq, lhs, rhs) if matches!(lhs.kind, ExprKind::Dot { .. }) => {
                Ok(Stmt::Equation { lhs: *lhs, rhs: *rhs, span: e.span })
            }
            ExprKind::Call(..) => Ok(Stmt::Call(e)),
            _ => Err(Diagnostic::error("syntax.statement", e.span, "expression is not a statement")
                .expecting(["assignment", "call", "equation"])),
        }
    }

    fn composition_entry(&mut self) -> PResult<CompositionEntry> {
        let name = self.bump();
        self.expect("(")?;
        let mut slots = Vec::new();
        loop {
            let slot = if self.check(",") || self.check(")") {
                Slot::Empty
            } else if self.eat("Skip") {
                Slot::Skip
            } else {
                Slot::Path(self.path()?)
            };
            slots.push(slot);
            if !self.eat(",") {
                break;
            }
        }
        self.expect(")")?;
        if slots.len() != 3 {
            return Err(Diagnostic::error(
                "composition.slots",
                name.span,
                format!("composition `{}` has {} slots; exactly three (source, action, target) are required", name.lexeme, slots.len()),
            )
            .expecting(["(source, action, target)"]));
        }
        self.expect("{")?;
        let body = self.stmts_until_brace(MethodKind::User)?;
        self.expect("}")?;
        self.expect(";")?;
        let mut it = slots.into_iter();
        Ok(CompositionEntry {
            name: name.lexeme.clone(),
            source: it.next().unwrap(),
            action: it.next().unwrap(),
            target: it.next().unwrap(),
            body,
            span: self.span_from(name.span),
        })
    }

    // --- expressions -------------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        self.or_expr()
    }

    fn binary_level(
        &mut self,
        ops: &[(&str, BinaryOp)],
        next: fn(&mut Self) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let mut lhs = next(self)?;
        'outer: loop {
            for (lex, op) in ops {
                if self.check(lex) {
                    self.bump();
                    let rhs = next(self)?;
                    let span = join(lhs.span, rhs.span);
                    lhs = Expr::new(ExprKind::Binary(*op, Box::new(lhs), Box::new(rhs)), span);
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&[("or", BinaryOp::Or)], Self::xor_expr)
    }

    fn xor_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&[("xor", BinaryOp::Xor)], Self::and_expr)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&[("and", BinaryOp::And)], Self::not_expr)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        let t = self.peek();
        if t.is(TokenKind::Operator, "!") {
            self.bump();
            let inner = self.not_expr()?;
            let span = join(t.span, inner.span);
            return Ok(Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(inner)), span));
        }
        self.in_expr()
    }

    fn in_expr(&mut self) -> PResult<Expr> {
        let lhs = self.rel_expr()?;
        if self.eat("in") {
            let i = self.interval()?;
            let span = join(lhs.span, i.span);
            return Ok(Expr::new(ExprKind::In(Box::new(lhs), Box::new(i)), span));
        }
        Ok(lhs)
    }

    fn rel_expr(&mut self) -> PResult<Expr> {
        self.binary_level(
            &[
                ("==", BinaryOp::Eq),
                ("!=", BinaryOp::Ne),
                ("<=", BinaryOp::Le),
                (">=", BinaryOp::Ge),
                ("<", BinaryOp::Lt),
                (">", BinaryOp::Gt),
            ],
            Self::add_expr,
        )
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&[("+", BinaryOp::Add), ("-", BinaryOp::Sub)], Self::mul_expr)
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        self.binary_level(&[("*", BinaryOp::Mul), ("/", BinaryOp::Div)], Self::unary_expr)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        let t = self.peek();
        let op = if t.is(TokenKind::Operator, "-") {
            UnaryOp::Neg
        } else if t.is(TokenKind::Operator, "+") {
            UnaryOp::Plus
        } else {
            return self.postfix_expr();
        };
        self.bump();
        let inner = self.unary_expr()?;
        let span = join(t.span, inner.span);
        if op == UnaryOp::Neg && matches!(inner.kind, ExprKind::Lit(Literal::Inf)) {
            return Ok(Expr::lit(Literal::NegInf, span));
        }
        Ok(Expr::new(ExprKind::Unary(op, Box::new(inner)), span))
    }

    fn postfix_expr(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.check(".") && self.peek_at(1).kind == TokenKind::Identifier {
                self.bump();
                let f = self.bump();
                let span = join(e.span, f.span);
                e = Expr::new(ExprKind::Field(Box::new(e), f.lexeme.clone()), span);
            } else if self.check("[") && !self.check_at(1, "]") {
                self.bump();
                let idx = self.expr()?;
                let close = self.expect("]")?;
                let span = join(e.span, close.span);
                e = Expr::new(ExprKind::Index(Box::new(e), Box::new(idx)), span);
            } else {
                return Ok(e);
            }
        }
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect("(")?;
        let mut args = Vec::new();
        if !self.check(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek();
        match t.kind {
            TokenKind::IntegerLiteral => {
                self.bump();
                let v = t.lexeme.parse::<i64>().map_err(|_| {
                    Diagnostic::error("syntax.number", t.span, "integer literal out of range").expecting(["integer"])
                })?;
                Ok(Expr::lit(Literal::Integer(v), t.span))
            }
            TokenKind::RealLiteral => {
                self.bump();
                Ok(Expr::lit(Literal::Real(t.lexeme.parse().unwrap()), t.span))
            }
            TokenKind::Identifier => {
                self.bump();
                if self.check("(") {
                    let args = self.args()?;
                    let span = self.span_from(t.span);
                    if t.lexeme == "dot" {
                        return dot_expr(args, span);
                    }
                    return Ok(Expr::new(ExprKind::Call(t.lexeme.clone(), args), span));
                }
                Ok(Expr::new(ExprKind::Var(t.lexeme.clone()), t.span))
            }
            TokenKind::Keyword => match t.lexeme.as_str() {
                "True" => {
                    self.bump();
                    Ok(Expr::lit(Literal::Boolean(true), t.span))
                }
                "False" => {
                    self.bump();
                    Ok(Expr::lit(Literal::Boolean(false), t.span))
                }
                "null" => {
                    self.bump();
                    Ok(Expr::lit(Literal::Null, t.span))
                }
                "Inf" => {
                    self.bump();
                    Ok(Expr::lit(Literal::Inf, t.span))
                }
                "this" => {
                    self.bump();
                    Ok(Expr::new(ExprKind::This, t.span))
                }
                "new" => self.new_expr(),
                _ => Err(self.unexpected(&["expression"])),
            },
            TokenKind::Punct if t.lexeme == "(" => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.unexpected(&["expression"])),
        }
    }

    fn new_expr(&mut self) -> PResult<Expr> {
        let start = self.expect("new")?.span;
        let class = self.type_expr()?;
        let args = self.args()?;
        let body = if self.check("{") {
            let name = match &class {
                TypeExpr::Interface(i) => i.name().to_string(),
                TypeExpr::Named(n) => n.clone(),
                _ => String::new(),
            };
            let decl = self.class_body(ClassHead::TopLevel, name, start, true)?;
            Some(decl.members)
        } else {
            None
        };
        let span = self.span_from(start);
        Ok(Expr::new(ExprKind::New(Box::new(NewExpr { class, args, body })), span))
    }

    fn interval(&mut self) -> PResult<IntervalExpr> {
        let open_tok = self.peek();
        let lo_open = if self.eat("(") {
            true
        } else if self.eat("[") {
            false
        } else {
            return Err(self.unexpected(&["[", "("]));
        };
        let lo = self.add_expr()?;
        self.expect(",")?;
        let hi = self.add_expr()?;
        let hi_open = if self.eat(")") {
            true
        } else if self.eat("]") {
            false
        } else {
            return Err(self.unexpected(&["]", ")"]));
        };
        let i = IntervalExpr { lo, hi, lo_open, hi_open, span: self.span_from(open_tok.span) };
        if let Err(msg) = check_interval_literals(&i) {
            return Err(Diagnostic::error("interval.invalid", i.span, msg).expecting(["valid interval"]));
        }
        Ok(i)
    }
}

fn join(a: Span, b: Span) -> Span {
    let end = b.end().max(a.end());
    Span::new(a.line, a.col, a.offset, end - a.offset)
}

fn path_of(e: &Expr) -> Option<Path> {
    e.as_path().map(|segments| Path { segments, span: e.span })
}

fn dot_expr(mut args: Vec<Expr>, span: Span) -> PResult<Expr> {
    let bad = || {
        Diagnostic::error("syntax.dot", span, "dot expects (variable, order) or (variable, variable, order)")
            .expecting(["dot(v, n)", "dot(v, u, n)"])
    };
    if !(2..=3).contains(&args.len()) {
        return Err(bad());
    }
    let order = match args.pop().unwrap().kind {
        ExprKind::Lit(Literal::Integer(n)) if n >= 1 => n as u32,
        _ => return Err(bad()),
    };
    let wrt = if args.len() == 2 { Some(Box::new(args.pop().unwrap())) } else { None };
    let var = args.pop().unwrap();
    if var.as_path().is_none() {
        return Err(bad());
    }
    Ok(Expr::new(ExprKind::Dot { var: Box::new(var), wrt, order }, span))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> CompilationUnit {
        parse_source(src).unwrap_or_else(|d| panic!("{d:?}"))
    }

    fn class(u: &CompilationUnit, i: usize) -> &ClassDecl {
        match &u.decls[i] {
            Decl::Class(c) => c,
            _ => panic!("not a class"),
        }
    }

    #[test]
    fn moving_dynamic() {
        let u = parse(
            "Dynamic Moving{ Real height,velocity,acceleration;
               Moving(Real height, Real velocity, Real acceleration){ this.height=height; }
               Continuous(){ dot(height,1) == velocity; dot(velocity,1) == -acceleration; }
               Invariant{ height in [0,15]; velocity in [-60,60]; };
             }",
        );
        let c = class(&u, 0);
        assert_eq!(c.head, ClassHead::Implements(BuiltinInterface::Dynamic));
        let cont = c.members.iter().find_map(|m| match m {
            Member::Method(m) if m.kind == MethodKind::Continuous => Some(m),
            _ => None,
        });
        assert_eq!(cont.unwrap().body.len(), 2);
        let inv = c.members.iter().find_map(|m| match m {
            Member::Block(b) => Some(b),
            _ => None,
        });
        assert_eq!(inv.unwrap().items.len(), 2);
        assert!(c.members.iter().any(|m| matches!(m, Member::Constructor(_))));
    }

    #[test]
    fn nested_class_is_rejected() {
        let e = parse_source("Plant P{ Plant Q{} }").unwrap_err();
        assert_eq!(e[0].rule, "class.nested");
    }

    #[test]
    fn intervals() {
        let toks = tokenize("[0,15]").unwrap();
        let i = parse_interval(&toks).unwrap();
        assert!(!i.lo_open && !i.hi_open);
        let toks = tokenize("[0,Inf)").unwrap();
        let i = parse_interval(&toks).unwrap();
        assert!(!i.lo_open && i.hi_open);
        assert_eq!(literal_value(&i.hi), Some(Value::Inf));
        for bad in ["(1,2)", "[-Inf, Inf]", "(-Inf, Inf]", "[-Inf, Inf)", "[3, 1]"] {
            let toks = tokenize(bad).unwrap();
            assert_eq!(parse_interval(&toks).unwrap_err().rule, "interval.invalid", "{bad}");
        }
        let toks = tokenize("(-Inf, Inf)").unwrap();
        assert!(parse_interval(&toks).is_ok());
    }

    #[test]
    fn composition_with_empty_slot() {
        let u = parse("Plant P{ Composition(){ Comp(Dy1, , Dy2){ Condition{ x==0; }; }; } }");
        let c = class(&u, 0);
        let Member::Method(m) = &c.members[0] else { panic!() };
        let Stmt::Composition(e) = &m.body[0] else { panic!() };
        assert_eq!(e.action, Slot::Empty);
    }

    #[test]
    fn composition_slot_count() {
        let e = parse_source("Plant P{ Composition(){ Comp(a, b){ }; } }").unwrap_err();
        assert_eq!(e[0].rule, "composition.slots");
    }

    #[test]
    fn precedence() {
        let e = parse_expression("a + b * c == d and !x in [0,1] or y").unwrap();
        let ExprKind::Binary(BinaryOp::Or, lhs, _) = &e.kind else { panic!("{e:?}") };
        let ExprKind::Binary(BinaryOp::And, eq, not) = &lhs.kind else { panic!() };
        assert!(matches!(eq.kind, ExprKind::Binary(BinaryOp::Eq, _, _)));
        let ExprKind::Unary(UnaryOp::Not, inner) = &not.kind else { panic!() };
        assert!(matches!(inner.kind, ExprKind::In(..)));
    }

    #[test]
    fn neg_inf_folds() {
        let e = parse_expression("-Inf").unwrap();
        assert_eq!(e.kind, ExprKind::Lit(Literal::NegInf));
    }

    #[test]
    fn statements() {
        let u = parse(
            "System S{ Real a,b; S(){ x.CompA || y.CompB; x || y; }
               Init(){ a=1,b=2; x.d.start(); foo(1); } }",
        );
        let c = class(&u, 0);
        let Member::Constructor(k) = &c.members[1] else { panic!("{:?}", c.members[1]) };
        assert!(matches!(&k.body[0], Stmt::Parallel(p, _) if p.len() == 2 && p[0].dotted() == "x.CompA"));
        let Member::Method(init) = &c.members[2] else { panic!() };
        assert!(matches!(&init.body[0], Stmt::Assign(p, _) if p.len() == 2));
        assert!(matches!(&init.body[1], Stmt::Start(p) if p.dotted() == "x.d"));
        assert!(matches!(&init.body[2], Stmt::Call(_)));
    }

    #[test]
    fn anonymous_class_and_skip() {
        let u = parse(
            "Controller God{ Dynamic idle = new Dynamic(){ Continuous(){ dot(t,1)==1; } };
               Assignment reset = Skip; }",
        );
        let c = class(&u, 0);
        let Member::Field(f) = &c.members[0] else { panic!() };
        let Some(Initializer::Expr(e)) = &f.declarators[0].init else { panic!() };
        let ExprKind::New(n) = &e.kind else { panic!() };
        assert!(n.body.is_some());
        let Member::Field(f) = &c.members[1] else { panic!() };
        assert!(matches!(f.declarators[0].init, Some(Initializer::Skip(_))));
    }

    #[test]
    fn syntax_error_lists_expected() {
        let e = parse_source("Plant P{ Real x }").unwrap_err();
        assert!(!e[0].expected.is_empty());
    }

    #[test]
    fn user_interface() {
        let u = parse("Interface Pump{ Requires dy[1..*]: Dynamic; Constraint clock; Prime(); }");
        let Decl::Interface(i) = &u.decls[0] else { panic!() };
        assert_eq!(i.items.len(), 3);
    }
}
