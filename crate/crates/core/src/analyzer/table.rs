//! Class table: declarations by name, inheritance, and lifted anonymous classes.

use indexmap::IndexMap;

use crate::ast::*;
use crate::diag::{Diagnostic, Span};
use crate::types::{builtin_parents, Hierarchy, SemType};

/// A field as seen from a class, inherited ones included.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldInfo {
    pub name: String,
    /// Declared type.
    pub declared: SemType,
    /// Declared type narrowed by a `new C(...)` initializer.
    pub effective: SemType,
    pub constant: bool,
    pub array: bool,
    pub init: Option<Initializer>,
    pub owner: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassInfo {
    pub decl: ClassDecl,
    pub superclass: Option<String>,
    /// Built-in interface named in the header, if any.
    pub implements: Option<BuiltinInterface>,
    /// User interface named in the header, if any.
    pub implements_user: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassTable {
    pub classes: IndexMap<String, ClassInfo>,
    pub interfaces: IndexMap<String, InterfaceDecl>,
}

impl Hierarchy for ClassTable {
    fn parents(&self, name: &str) -> Vec<String> {
        if let Some(c) = self.classes.get(name) {
            let mut v = Vec::new();
            v.extend(c.superclass.clone());
            v.extend(c.implements.map(|i| i.name().to_string()));
            v.extend(c.implements_user.clone());
            return v;
        }
        builtin_parents(name)
    }
}

/// Moves every `new T(){...}` body into a top-level class named after its
/// position (`Owner.field` or `Owner.anonN`) and rewrites the creation to
/// `new Owner.field()`. Generated names contain a dot, so they never clash with
/// user identifiers.
pub fn lift_anonymous(unit: &CompilationUnit) -> CompilationUnit {
    let mut out = Vec::new();
    let mut lifted = Vec::new();
    for d in &unit.decls {
        match d {
            Decl::Class(c) => {
                let mut c = c.clone();
                let mut counter = 0;
                lift_in_class(&mut c, &mut lifted, &mut counter);
                out.push(Decl::Class(c));
            }
            other => out.push(other.clone()),
        }
    }
    // lifted classes may themselves contain anonymous bodies
    while let Some(mut c) = lifted.pop() {
        let mut counter = 0;
        let mut more = Vec::new();
        lift_in_class(&mut c, &mut more, &mut counter);
        lifted.extend(more);
        out.push(Decl::Class(c));
    }
    CompilationUnit { decls: out }
}

fn lift_in_class(c: &mut ClassDecl, lifted: &mut Vec<ClassDecl>, counter: &mut usize) {
    let owner = c.name.clone();
    for m in &mut c.members {
        match m {
            Member::Field(f) => {
                for d in &mut f.declarators {
                    if let Some(Initializer::Expr(e)) = &mut d.init {
                        let hint = format!("{owner}.{}", d.name);
                        lift_in_expr(e, Some(hint), &owner, lifted, counter);
                    }
                }
            }
            Member::Constructor(m) | Member::Method(m) => {
                for s in &mut m.body {
                    lift_in_stmt(s, &owner, lifted, counter);
                }
            }
            Member::Block(_) => {}
        }
    }
}

fn lift_in_stmt(s: &mut Stmt, owner: &str, lifted: &mut Vec<ClassDecl>, counter: &mut usize) {
    match s {
        Stmt::VarDecl(f) => {
            for d in &mut f.declarators {
                if let Some(Initializer::Expr(e)) = &mut d.init {
                    lift_in_expr(e, None, owner, lifted, counter);
                }
            }
        }
        Stmt::Assign(pairs, _) => {
            for (_, r) in pairs {
                lift_in_expr(r, None, owner, lifted, counter);
            }
        }
        Stmt::Composition(c) => {
            for s in &mut c.body {
                lift_in_stmt(s, owner, lifted, counter);
            }
        }
        _ => {}
    }
}

fn lift_in_expr(e: &mut Expr, hint: Option<String>, owner: &str, lifted: &mut Vec<ClassDecl>, counter: &mut usize) {
    if let ExprKind::New(n) = &mut e.kind {
        if let Some(body) = n.body.take() {
            let name = hint.unwrap_or_else(|| {
                *counter += 1;
                format!("{owner}.anon{counter}")
            });
            let head = match &n.class {
                TypeExpr::Interface(i) => ClassHead::Implements(*i),
                TypeExpr::Named(s) => ClassHead::Extends(s.clone()),
                _ => ClassHead::TopLevel,
            };
            lifted.push(ClassDecl { head, name: name.clone(), members: body, span: e.span, anonymous: true });
            n.class = TypeExpr::Named(name);
        }
    }
}

impl ClassTable {
    /// Builds the table from a unit whose anonymous classes are already lifted.
    pub fn build(unit: &CompilationUnit) -> (ClassTable, Vec<Diagnostic>) {
        let mut t = ClassTable::default();
        let mut diags = Vec::new();
        for d in &unit.decls {
            if let Decl::Interface(i) = d {
                if t.interfaces.contains_key(&i.name) || BuiltinInterface::from_name(&i.name).is_some() {
                    diags.push(Diagnostic::error("name.duplicate", i.span, format!("interface `{}` is declared twice", i.name)));
                    continue;
                }
                t.interfaces.insert(i.name.clone(), i.clone());
            }
        }
        for d in &unit.decls {
            let Decl::Class(c) = d else { continue };
            if t.classes.contains_key(&c.name) || t.interfaces.contains_key(&c.name) {
                diags.push(Diagnostic::error("name.duplicate", c.span, format!("class `{}` is declared twice", c.name)));
                continue;
            }
            let (superclass, implements, implements_user) = match &c.head {
                ClassHead::TopLevel => (None, None, None),
                ClassHead::Implements(i) => (None, Some(*i), None),
                ClassHead::Extends(s) if t.interfaces.contains_key(s) => (None, None, Some(s.clone())),
                ClassHead::Extends(s) => (Some(s.clone()), None, None),
            };
            t.classes.insert(c.name.clone(), ClassInfo { decl: c.clone(), superclass, implements, implements_user });
        }
        let names: Vec<String> = t.classes.keys().cloned().collect();
        for n in &names {
            let c = &t.classes[n];
            if let Some(s) = &c.superclass {
                if !t.classes.contains_key(s) {
                    diags.push(Diagnostic::error("name.unknown", c.decl.span, format!("`{n}` extends unknown class `{s}`")));
                } else if t.ancestors(s).iter().any(|a| a == n) {
                    diags.push(Diagnostic::error("name.cyclic", c.decl.span, format!("inheritance cycle through `{n}`")));
                }
            }
        }
        if !diags.is_empty() {
            // a broken hierarchy would make later lookups loop or mislead
            for n in &names {
                if let Some(c) = t.classes.get_mut(n) {
                    if c.superclass.as_ref().is_some_and(|s| !names.contains(s)) {
                        c.superclass = None;
                    }
                }
            }
            let cyclic: Vec<String> = names.iter().filter(|n| t.ancestors(n).contains(n)).cloned().collect();
            for n in cyclic {
                t.classes.get_mut(&n).unwrap().superclass = None;
            }
        }
        (t, diags)
    }

    pub fn get(&self, name: &str) -> Option<&ClassInfo> {
        self.classes.get(name)
    }

    /// Proper superclasses, nearest first. Stops on cycles.
    pub fn ancestors(&self, name: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut cur = self.classes.get(name).and_then(|c| c.superclass.clone());
        while let Some(s) = cur {
            if out.contains(&s) || s == name {
                out.push(s);
                break;
            }
            out.push(s.clone());
            cur = self.classes.get(&s).and_then(|c| c.superclass.clone());
        }
        out
    }

    /// Built-in interface a class implements, directly or through a superclass.
    pub fn builtin_interface(&self, name: &str) -> Option<BuiltinInterface> {
        std::iter::once(name.to_string())
            .chain(self.ancestors(name))
            .find_map(|c| self.classes.get(&c).and_then(|i| i.implements))
    }

    pub fn user_interface(&self, name: &str) -> Option<String> {
        std::iter::once(name.to_string())
            .chain(self.ancestors(name))
            .find_map(|c| self.classes.get(&c).and_then(|i| i.implements_user.clone()))
    }

    pub fn is_interface(&self, name: &str) -> bool {
        BuiltinInterface::from_name(name).is_some() || self.interfaces.contains_key(name)
    }

    pub fn sem_type(&self, t: &TypeExpr) -> SemType {
        SemType::from_type_expr(t, &|n| self.is_interface(n))
    }

    /// Does `ty` denote (a subtype of) the built-in interface?
    pub fn type_implements(&self, ty: &SemType, iface: BuiltinInterface) -> bool {
        crate::types::is_subtype(ty, &SemType::interface(iface), self)
    }

    /// Superclass-first chain ending with the class itself.
    fn chain(&self, name: &str) -> Vec<&ClassInfo> {
        let mut v: Vec<&ClassInfo> = self.ancestors(name).iter().rev().filter_map(|c| self.classes.get(c)).collect();
        v.extend(self.classes.get(name));
        v
    }

    pub fn fields(&self, name: &str) -> Vec<FieldInfo> {
        let mut out: Vec<FieldInfo> = Vec::new();
        for c in self.chain(name) {
            for m in &c.decl.members {
                let Member::Field(f) = m else { continue };
                let declared = self.sem_type(&f.ty);
                for d in &f.declarators {
                    let mut declared = declared.clone();
                    if d.array {
                        declared = SemType::Array(Box::new(declared));
                    }
                    let effective = match &d.init {
                        Some(Initializer::Expr(Expr { kind: ExprKind::New(n), .. })) => match &n.class {
                            TypeExpr::Named(c) if self.classes.contains_key(c) => SemType::Class(c.clone()),
                            _ => declared.clone(),
                        },
                        _ => declared.clone(),
                    };
                    let info = FieldInfo {
                        name: d.name.clone(),
                        declared,
                        effective,
                        constant: f.constant,
                        array: d.array,
                        init: d.init.clone(),
                        owner: c.decl.name.clone(),
                        span: d.span,
                    };
                    if let Some(pos) = out.iter().position(|x| x.name == d.name) {
                        out[pos] = info;
                    } else {
                        out.push(info);
                    }
                }
            }
        }
        out
    }

    pub fn field(&self, class: &str, name: &str) -> Option<FieldInfo> {
        self.fields(class).into_iter().find(|f| f.name == name)
    }

    /// Methods visible in a class; a subclass method hides an inherited one of
    /// the same name.
    pub fn methods(&self, name: &str) -> Vec<&MethodDecl> {
        let mut out: Vec<&MethodDecl> = Vec::new();
        for c in self.chain(name) {
            for m in &c.decl.members {
                if let Member::Method(m) = m {
                    if let Some(pos) = out.iter().position(|x| x.name == m.name) {
                        out[pos] = m;
                    } else {
                        out.push(m);
                    }
                }
            }
        }
        out
    }

    pub fn method(&self, class: &str, kind: MethodKind) -> Option<&MethodDecl> {
        self.methods(class).into_iter().find(|m| m.kind == kind)
    }

    pub fn constructors(&self, name: &str) -> Vec<&MethodDecl> {
        self.classes
            .get(name)
            .map(|c| {
                c.decl
                    .members
                    .iter()
                    .filter_map(|m| match m {
                        Member::Constructor(k) => Some(k),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Class-level blocks, inherited ones first.
    pub fn blocks(&self, name: &str, kind: BlockKind) -> Vec<&Block> {
        self.chain(name)
            .into_iter()
            .flat_map(|c| c.decl.members.iter())
            .filter_map(|m| match m {
                Member::Block(b) if b.kind == kind => Some(b),
                _ => None,
            })
            .collect()
    }

    /// Composition entries visible in a class.
    pub fn compositions(&self, name: &str) -> Vec<&CompositionEntry> {
        self.method(name, MethodKind::Composition)
            .map(|m| {
                m.body
                    .iter()
                    .filter_map(|s| match s {
                        Stmt::Composition(c) => Some(c),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Enclosing class of a lifted anonymous class, whose fields it can see.
    pub fn outer<'a>(&self, name: &'a str) -> Option<&'a str> {
        let c = self.classes.get(name)?;
        if !c.decl.anonymous {
            return None;
        }
        name.rsplit_once('.').map(|(o, _)| o).filter(|o| self.classes.contains_key(*o))
    }

    /// Field lookup that falls back to enclosing classes.
    pub fn visible_field(&self, class: &str, name: &str) -> Option<FieldInfo> {
        let mut cur = Some(class);
        while let Some(c) = cur {
            if let Some(f) = self.field(c, name) {
                return Some(f);
            }
            cur = self.outer(c);
        }
        None
    }

    /// Class named by a field's effective type.
    pub fn field_class(&self, class: &str, field: &str) -> Option<String> {
        match self.field(class, field)?.effective {
            SemType::Class(c) => Some(c),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_source;

    #[test]
    fn lifts_and_resolves() {
        let u = parse_source(include_str!("../../models/bouncing_ball.apr")).unwrap();
        let u = lift_anonymous(&u);
        let (t, d) = ClassTable::build(&u);
        assert!(d.is_empty(), "{d:?}");
        assert!(t.get("God.idle").is_some_and(|c| c.decl.anonymous));
        assert_eq!(t.builtin_interface("God.idle"), Some(BuiltinInterface::Dynamic));
        assert_eq!(t.field_class("Ball", "moving").as_deref(), Some("Moving"));
        assert_eq!(t.field_class("God", "idle").as_deref(), Some("God.idle"));
        assert!(t.type_implements(&SemType::Class("Jump".into()), BuiltinInterface::Assignment));
        assert_eq!(t.compositions("Ball").len(), 1);
        let names: Vec<String> = t.fields("BouncingBall").into_iter().map(|f| f.name).collect();
        assert_eq!(names, ["height", "velocity", "t", "h", "v", "g", "k", "mass", "god", "ball"]);
    }

    #[test]
    fn inheritance_merges_fields_and_methods() {
        let u = parse_source(
            "Dynamic Base{ Real x; Continuous(){ dot(x,1)==1; } Invariant{ x in [0,1]; }; }
             Base Child{ Real y; }",
        )
        .unwrap();
        let (t, d) = ClassTable::build(&u);
        assert!(d.is_empty());
        assert_eq!(t.builtin_interface("Child"), Some(BuiltinInterface::Dynamic));
        assert_eq!(t.fields("Child").len(), 2);
        assert!(t.method("Child", MethodKind::Continuous).is_some());
        assert_eq!(t.blocks("Child", BlockKind::Invariant).len(), 1);
    }

    #[test]
    fn duplicate_and_unknown_classes() {
        let u = parse_source("Class A{} Class A{} B C{}").unwrap();
        let (_, d) = ClassTable::build(&u);
        let rules: Vec<&str> = d.iter().map(|d| d.rule.as_str()).collect();
        assert_eq!(rules, ["name.duplicate", "name.unknown"]);
    }
}
