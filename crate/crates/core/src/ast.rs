//! Syntax tree of an Apricot compilation unit.

use crate::diag::Span;

/// The seven built-in interfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BuiltinInterface {
    System,
    Plant,
    Controller,
    Dynamic,
    Assignment,
    ParallelAssignment,
    SequentialAssignment,
}

impl BuiltinInterface {
    pub const ALL: [BuiltinInterface; 7] = [
        BuiltinInterface::System,
        BuiltinInterface::Plant,
        BuiltinInterface::Controller,
        BuiltinInterface::Dynamic,
        BuiltinInterface::Assignment,
        BuiltinInterface::ParallelAssignment,
        BuiltinInterface::SequentialAssignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinInterface::System => "System",
            BuiltinInterface::Plant => "Plant",
            BuiltinInterface::Controller => "Controller",
            BuiltinInterface::Dynamic => "Dynamic",
            BuiltinInterface::Assignment => "Assignment",
            BuiltinInterface::ParallelAssignment => "ParallelAssignment",
            BuiltinInterface::SequentialAssignment => "SequentialAssignment",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.name() == s)
    }

    /// True for `Assignment` and its two sub-interfaces.
    pub fn is_assignment(self) -> bool {
        matches!(
            self,
            BuiltinInterface::Assignment
                | BuiltinInterface::ParallelAssignment
                | BuiltinInterface::SequentialAssignment
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimKind {
    Integer,
    Real,
    Boolean,
}

/// A type as written in source.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeExpr {
    /// Lowercase, call-by-value: `integer`, `real`, `boolean`.
    Primitive(PrimKind),
    /// Capitalized, shareable: `Integer`, `Real`, `Boolean`.
    Mathematic(PrimKind),
    Interface(BuiltinInterface),
    /// A user class or user interface name.
    Named(String),
    Array(Box<TypeExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompilationUnit {
    pub decls: Vec<Decl>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    Class(ClassDecl),
    Interface(InterfaceDecl),
}

/// How a class declaration names its parent.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassHead {
    /// `Class Name { ... }`
    TopLevel,
    /// `Plant Name { ... }` and friends.
    Implements(BuiltinInterface),
    /// `Parent Name { ... }` where `Parent` is a user class or user interface;
    /// which of the two is decided during analysis.
    Extends(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDecl {
    pub head: ClassHead,
    pub name: String,
    pub members: Vec<Member>,
    pub span: Span,
    /// Set for classes synthesized from `new T(){...}`.
    pub anonymous: bool,
}

/// `Interface Name { ... }` declared by the user.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceDecl {
    pub name: String,
    pub items: Vec<InterfaceItem>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InterfaceItem {
    Method { name: String, span: Span },
    Requires { name: String, lo: u32, hi: Option<u32>, ty: TypeExpr, span: Span },
    Constraint { name: String, span: Span },
    Block { kind: BlockKind, span: Span },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Member {
    Field(FieldDecl),
    Constructor(MethodDecl),
    Method(MethodDecl),
    Block(Block),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDecl {
    pub constant: bool,
    pub ty: TypeExpr,
    pub declarators: Vec<Declarator>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declarator {
    pub name: String,
    pub array: bool,
    pub init: Option<Initializer>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    Expr(Expr),
    Array(Vec<Expr>, Span),
    /// `Assignment reset = Skip;`
    Skip(Span),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Continuous,
    Discrete,
    Composition,
    Init,
    User,
}

impl MethodKind {
    pub fn keyword(self) -> Option<&'static str> {
        match self {
            MethodKind::Continuous => Some("Continuous"),
            MethodKind::Discrete => Some("Discrete"),
            MethodKind::Composition => Some("Composition"),
            MethodKind::Init => Some("Init"),
            MethodKind::User => None,
        }
    }
}

/// Execution discipline of a `Discrete` body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignMode {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodDecl {
    pub kind: MethodKind,
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub span: Span,
    /// Filled in by normalization for `Discrete` bodies.
    pub mode: Option<AssignMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub ty: TypeExpr,
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Invariant,
    Condition,
}

impl BlockKind {
    pub fn keyword(self) -> &'static str {
        match self {
            BlockKind::Invariant => "Invariant",
            BlockKind::Condition => "Condition",
        }
    }
}

/// `Invariant{...};` or `Condition{...};`
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    pub items: Vec<Expr>,
    pub span: Span,
}

/// Source, action or destination slot of a composition entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    /// Nothing written between the commas.
    Empty,
    Skip,
    Path(Path),
}

/// A dotted name such as `ball.moving`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub segments: Vec<String>,
    pub span: Span,
}

impl Path {
    pub fn dotted(&self) -> String {
        self.segments.join(".")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionEntry {
    pub name: String,
    pub source: Slot,
    pub action: Slot,
    pub target: Slot,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    VarDecl(FieldDecl),
    /// One or more comma-separated assignments, executed left to right.
    Assign(Vec<(Expr, Expr)>, Span),
    Start(Path),
    /// Normalized form of the `start()` calls of an initializer.
    ParallelStart(Vec<Path>, Span),
    /// `a || b;` over composition relations or components.
    Parallel(Vec<Path>, Span),
    Skip(Span),
    Return(Option<Expr>, Span),
    Call(Expr),
    /// `dot(v,n) == rhs;`
    Equation { lhs: Expr, rhs: Expr, span: Span },
    Composition(CompositionEntry),
    Block(Block),
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::VarDecl(d) => d.span,
            Stmt::Assign(_, s)
            | Stmt::ParallelStart(_, s)
            | Stmt::Parallel(_, s)
            | Stmt::Skip(s)
            | Stmt::Return(_, s) => *s,
            Stmt::Start(p) => p.span,
            Stmt::Call(e) => e.span,
            Stmt::Equation { span, .. } => *span,
            Stmt::Composition(c) => c.span,
            Stmt::Block(b) => b.span,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Plus,
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Xor,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
            BinaryOp::Xor => "xor",
        }
    }

    pub fn is_relational(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinaryOp::And | BinaryOp::Or | BinaryOp::Xor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Integer(i64),
    Real(f64),
    Boolean(bool),
    Null,
    Inf,
    NegInf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Lit(Literal),
    Var(String),
    This,
    Field(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    In(Box<Expr>, Box<IntervalExpr>),
    Call(String, Vec<Expr>),
    /// `dot(v, n)` or `dot(v, u, n)`.
    Dot { var: Box<Expr>, wrt: Option<Box<Expr>>, order: u32 },
    New(Box<NewExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalExpr {
    pub lo: Expr,
    pub hi: Expr,
    pub lo_open: bool,
    pub hi_open: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewExpr {
    pub class: TypeExpr,
    pub args: Vec<Expr>,
    /// Body of an anonymous class, `new Dynamic(){ ... }`.
    pub body: Option<Vec<Member>>,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn lit(l: Literal, span: Span) -> Self {
        Expr::new(ExprKind::Lit(l), span)
    }

    /// Splits a conjunction tree into its conjuncts, left to right.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Binary(BinaryOp::And, a, b) => {
                let mut v = a.conjuncts();
                v.extend(b.conjuncts());
                v
            }
            _ => vec![self],
        }
    }

    /// Dotted path for `a`, `a.b`, `this.a`; `None` for anything else.
    pub fn as_path(&self) -> Option<Vec<String>> {
        match &self.kind {
            ExprKind::Var(n) => Some(vec![n.clone()]),
            ExprKind::This => Some(vec!["this".into()]),
            ExprKind::Field(b, f) => {
                let mut p = b.as_path()?;
                p.push(f.clone());
                Some(p)
            }
            _ => None,
        }
    }

    /// Visits this expression and all sub-expressions in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Lit(_) | ExprKind::Var(_) | ExprKind::This => {}
            ExprKind::Field(b, _) => b.walk(f),
            ExprKind::Index(a, b) | ExprKind::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Unary(_, a) => a.walk(f),
            ExprKind::In(a, i) => {
                a.walk(f);
                i.lo.walk(f);
                i.hi.walk(f);
            }
            ExprKind::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
            ExprKind::Dot { var, wrt, .. } => {
                var.walk(f);
                if let Some(w) = wrt {
                    w.walk(f);
                }
            }
            ExprKind::New(n) => n.args.iter().for_each(|a| a.walk(f)),
        }
    }
}
