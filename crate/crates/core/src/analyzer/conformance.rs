//! Interface contracts: required methods, field cardinalities, clock
//! constraint, block placement and the shapes of equations, guards and Init.

use crate::ast::*;
use crate::diag::{Diagnostic, Span};
use crate::types::{is_subtype, SemType};

use super::table::{ClassTable, FieldInfo};

use BuiltinInterface as BI;

pub fn check_interface_conformance(t: &ClassTable) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (name, info) in &t.classes {
        let c = &info.decl;
        check_reserved_tw(c, &mut out);
        check_placement(t, name, &mut out);
        match t.builtin_interface(name) {
            Some(BI::System) => check_system(t, name, &mut out),
            Some(BI::Plant) => check_component(t, name, false, &mut out),
            Some(BI::Controller) => {
                check_component(t, name, true, &mut out);
                out.extend(check_clock_constraint(t, name));
            }
            Some(BI::Dynamic) => check_dynamic(t, name, &mut out),
            Some(i) if i.is_assignment() => check_assignment(t, name, &mut out),
            _ => {}
        }
        if let Some(ui) = t.user_interface(name) {
            check_user_interface(t, name, &ui, &mut out);
        }
    }
    out
}

fn err(rule: &str, span: Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(rule, span, msg)
}

fn check_reserved_tw(c: &ClassDecl, out: &mut Vec<Diagnostic>) {
    let mut flag = |name: &str, span: Span| {
        if name == "tw" {
            out.push(err("name.reserved_tw", span, "`tw` is the reserved waiting-time clock and cannot be declared"));
        }
    };
    for m in &c.members {
        match m {
            Member::Field(f) => f.declarators.iter().for_each(|d| flag(&d.name, d.span)),
            Member::Constructor(m) | Member::Method(m) => {
                m.params.iter().for_each(|p| flag(&p.name, p.span));
                for s in &m.body {
                    if let Stmt::VarDecl(f) = s {
                        f.declarators.iter().for_each(|d| flag(&d.name, d.span));
                    }
                }
            }
            Member::Block(_) => {}
        }
    }
}

fn check_placement(t: &ClassTable, name: &str, out: &mut Vec<Diagnostic>) {
    let iface = t.builtin_interface(name);
    let c = &t.classes[name].decl;
    for m in &c.members {
        match m {
            Member::Block(b) => match b.kind {
                BlockKind::Invariant if iface == Some(BI::Dynamic) => {}
                BlockKind::Invariant => out.push(err(
                    "block.misplaced",
                    b.span,
                    format!("Invariant block in `{name}`; Invariant belongs in a Dynamic body"),
                )),
                BlockKind::Condition => out.push(err(
                    "block.misplaced",
                    b.span,
                    format!("Condition block in the body of `{name}`; Condition belongs in a composition entry"),
                )),
            },
            Member::Method(m) => {
                let allowed = match m.kind {
                    MethodKind::Continuous => iface == Some(BI::Dynamic),
                    MethodKind::Discrete => iface.is_some_and(|i| i.is_assignment()),
                    MethodKind::Composition => matches!(iface, Some(BI::Plant | BI::Controller)),
                    MethodKind::Init => iface == Some(BI::System),
                    MethodKind::User => true,
                };
                if !allowed {
                    out.push(err(
                        "interface.method",
                        m.span,
                        format!("`{}()` is not part of the interface `{name}` implements", m.name),
                    ));
                }
                check_stmt_blocks(&m.body, m.kind == MethodKind::Composition, false, out);
            }
            Member::Constructor(m) => check_stmt_blocks(&m.body, false, false, out),
            Member::Field(_) => {}
        }
    }
}

/// `in_entry`: statements are the body of a composition entry.
fn check_stmt_blocks(body: &[Stmt], in_composition: bool, in_entry: bool, out: &mut Vec<Diagnostic>) {
    for s in body {
        match s {
            Stmt::Block(b) if b.kind == BlockKind::Condition && in_entry => {}
            Stmt::Block(b) => {
                let msg = match b.kind {
                    BlockKind::Condition => "Condition block outside a composition entry",
                    BlockKind::Invariant => "Invariant block inside a method; Invariant belongs in a Dynamic body",
                };
                out.push(err("block.misplaced", b.span, msg));
            }
            Stmt::Composition(c) if in_composition && !in_entry => check_stmt_blocks(&c.body, true, true, out),
            Stmt::Composition(c) => {
                out.push(err("block.misplaced", c.span, "composition entry outside a Composition method"));
            }
            _ => {}
        }
    }
}

fn implements(t: &ClassTable, f: &FieldInfo, i: BI) -> bool {
    t.type_implements(&f.effective, i) || t.type_implements(&f.declared, i)
}

fn fields_of(t: &ClassTable, name: &str, i: BI) -> Vec<FieldInfo> {
    t.fields(name).into_iter().filter(|f| implements(t, f, i)).collect()
}

fn check_system(t: &ClassTable, name: &str, out: &mut Vec<Diagnostic>) {
    let c = &t.classes[name].decl;
    let init = t.method(name, MethodKind::Init);
    if init.is_none() {
        out.push(err("interface.system.init", c.span, format!("system `{name}` has no Init() method")));
    }
    let plants = fields_of(t, name, BI::Plant);
    let controllers = fields_of(t, name, BI::Controller);
    if plants.is_empty() {
        out.push(err("cardinality.plants", c.span, format!("system `{name}` requires at least one Plant")));
    }
    if controllers.is_empty() {
        out.push(err("cardinality.controllers", c.span, format!("system `{name}` requires at least one Controller")));
    }
    let components: Vec<FieldInfo> = plants.into_iter().chain(controllers).collect();
    if let Some(init) = init {
        check_init(t, name, init, &components, out);
    }
    for k in t.constructors(name) {
        for s in &k.body {
            if let Stmt::Parallel(paths, span) = s {
                check_parallel(t, paths, *span, &components, out);
            }
        }
    }
}

fn component_class(t: &ClassTable, f: &FieldInfo) -> Option<String> {
    match &f.effective {
        SemType::Class(c) if t.classes.contains_key(c) => Some(c.clone()),
        _ => None,
    }
}

fn check_parallel(t: &ClassTable, paths: &[Path], span: Span, comps: &[FieldInfo], out: &mut Vec<Diagnostic>) {
    for p in paths {
        let Some(comp) = comps.iter().find(|f| f.name == p.segments[0]) else {
            out.push(err("name.unknown", p.span, format!("`{}` is not a component of this system", p.segments[0])));
            continue;
        };
        match p.segments.len() {
            1 => {}
            2 => {
                let known = component_class(t, comp)
                    .is_some_and(|c| t.compositions(&c).iter().any(|e| e.name == p.segments[1]));
                if !known {
                    out.push(err(
                        "sync.unknown_composition",
                        p.span,
                        format!("`{}` names no composition relationship of `{}`", p.dotted(), comp.name),
                    ));
                }
            }
            _ => out.push(err("sync.unknown_composition", p.span, format!("`{}` is not COMPONENT.COMPOSITION", p.dotted()))),
        }
    }
    let mixed = paths.iter().any(|p| p.segments.len() == 1) && paths.iter().any(|p| p.segments.len() > 1);
    if mixed {
        out.push(err("sync.mixed", span, "a parallel statement mixes components and composition relationships"));
    }
}

fn check_init(t: &ClassTable, name: &str, init: &MethodDecl, comps: &[FieldInfo], out: &mut Vec<Diagnostic>) {
    let mut started: Vec<String> = Vec::new();
    let mut starts: Vec<&Path> = Vec::new();
    for s in &init.body {
        match s {
            Stmt::Start(p) => starts.push(p),
            Stmt::ParallelStart(ps, _) => starts.extend(ps),
            _ => {}
        }
    }
    for p in starts {
        let comp = comps.iter().find(|f| f.name == p.segments[0]);
        let ok = p.segments.len() == 2
            && comp.and_then(|c| component_class(t, c)).is_some_and(|cls| {
                t.field(&cls, &p.segments[1]).is_some_and(|f| implements(t, &f, BI::Dynamic))
            });
        if !ok {
            out.push(err(
                "init.start_target",
                p.span,
                format!("`{}.start()` does not name a Dynamic of a component of `{name}`", p.dotted()),
            ));
            continue;
        }
        if started.contains(&p.segments[0]) {
            out.push(err(
                "init.duplicate_start",
                p.span,
                format!("component `{}` has multiple initial dynamics", p.segments[0]),
            ));
        } else {
            started.push(p.segments[0].clone());
        }
    }
    for c in comps {
        if !started.contains(&c.name) {
            out.push(err("init.missing_start", init.span, format!("Init() starts no dynamic of component `{}`", c.name)));
        }
    }
}

fn check_component(t: &ClassTable, name: &str, controller: bool, out: &mut Vec<Diagnostic>) {
    let c = &t.classes[name].decl;
    let kind = if controller { "controller" } else { "plant" };
    let dynamics = fields_of(t, name, BI::Dynamic);
    let assignments = fields_of(t, name, BI::Assignment);
    let systems = fields_of(t, name, BI::System);
    if dynamics.is_empty() {
        out.push(err("cardinality.dynamics", c.span, format!("{kind} `{name}` requires at least one Dynamic")));
    }
    if assignments.is_empty() {
        out.push(err("cardinality.assignments", c.span, format!("{kind} `{name}` requires at least one Assignment")));
    }
    if controller && !systems.is_empty() {
        out.push(err("interface.controller.subsystem", systems[0].span, format!("controller `{name}` cannot own a System")));
    } else if systems.len() > 1 {
        out.push(err("cardinality.subsystem", systems[1].span, format!("plant `{name}` may own at most one System")));
    }
    let entries = t.compositions(name);
    match t.method(name, MethodKind::Composition) {
        None => out.push(err("cardinality.compositions", c.span, format!("{kind} `{name}` has no Composition() method"))),
        Some(m) if entries.is_empty() => {
            out.push(err("cardinality.compositions", m.span, format!("{kind} `{name}` declares no composition relationship")))
        }
        Some(m) => {
            for s in &m.body {
                if !matches!(s, Stmt::Composition(_)) {
                    out.push(err("composition.form", s.span(), "Composition() may only contain composition entries"));
                }
            }
        }
    }
    let is_endpoint = |p: &Path| {
        p.segments.len() == 1
            && (dynamics.iter().any(|f| f.name == p.segments[0])
                || (!controller && systems.iter().any(|f| f.name == p.segments[0])))
    };
    for e in entries {
        for (slot, what) in [(&e.source, "source"), (&e.target, "target")] {
            let ok = matches!(slot, Slot::Path(p) if is_endpoint(p));
            if !ok {
                out.push(err(
                    "composition.endpoint",
                    e.span,
                    format!("{what} of `{}` must name a Dynamic{} of `{name}`", e.name, if controller { "" } else { " or the subsystem" }),
                ));
            }
        }
        if let Slot::Path(p) = &e.action {
            if !(p.segments.len() == 1 && assignments.iter().any(|f| f.name == p.segments[0])) {
                out.push(err("composition.action", p.span, format!("action of `{}` must name an Assignment of `{name}` or be Skip", e.name)));
            }
        }
        for s in &e.body {
            if let Stmt::Block(b) = s {
                if b.kind == BlockKind::Condition {
                    for item in &b.items {
                        check_condition_form(item, out);
                    }
                }
            } else {
                out.push(err("composition.form", s.span(), "a composition entry may only contain a Condition block"));
            }
        }
    }
}

fn check_condition_form(e: &Expr, out: &mut Vec<Diagnostic>) {
    match &e.kind {
        ExprKind::Binary(op, _, _) if op.is_relational() => {}
        ExprKind::Binary(BinaryOp::And, a, b) => {
            check_condition_form(a, out);
            check_condition_form(b, out);
        }
        ExprKind::Lit(Literal::Boolean(_)) => {}
        _ => out.push(err("condition.form", e.span, "Condition entries must be relational expressions (==, !=, <, <=, >, >=)")),
    }
}

fn check_dynamic(t: &ClassTable, name: &str, out: &mut Vec<Diagnostic>) {
    let c = &t.classes[name].decl;
    match t.method(name, MethodKind::Continuous) {
        None => out.push(err("interface.dynamic.continuous", c.span, format!("dynamic `{name}` has no Continuous() method"))),
        Some(m) => {
            for s in &m.body {
                let ok = matches!(s, Stmt::Equation { lhs, .. }
                    if matches!(&lhs.kind, ExprKind::Dot { var, .. } if var.as_path().is_some()));
                if !ok {
                    out.push(err("continuous.form", s.span(), "Continuous() may only contain equations dot(v,n) == expression"));
                }
            }
        }
    }
    let invariants = t.blocks(name, BlockKind::Invariant);
    if invariants.is_empty() && !c.anonymous {
        out.push(err("interface.dynamic.invariant", c.span, format!("dynamic `{name}` has no Invariant block")));
    }
    for b in invariants {
        for item in &b.items {
            let ok = matches!(item.kind, ExprKind::In(..) | ExprKind::Lit(Literal::Boolean(true)));
            if !ok {
                out.push(err("invariant.form", item.span, "Invariant entries must have the form `variable in interval`"));
            }
        }
    }
}

fn check_assignment(t: &ClassTable, name: &str, out: &mut Vec<Diagnostic>) {
    let c = &t.classes[name].decl;
    match t.method(name, MethodKind::Discrete) {
        None => out.push(err("interface.assignment.discrete", c.span, format!("assignment `{name}` has no Discrete() method"))),
        Some(m) => {
            for s in &m.body {
                if !matches!(s, Stmt::Assign(..) | Stmt::Skip(_)) {
                    out.push(err("discrete.form", s.span(), "Discrete() may only contain assignments"));
                }
            }
        }
    }
}

/// Every equation of every Dynamic owned by the controller must be
/// `dot(x,1) == 1`.
pub fn check_clock_constraint(t: &ClassTable, controller: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for f in fields_of(t, controller, BI::Dynamic) {
        let Some(cls) = component_class(t, &f) else { continue };
        let Some(m) = t.method(&cls, MethodKind::Continuous) else { continue };
        for s in &m.body {
            let Stmt::Equation { lhs, rhs, span } = s else { continue };
            let order_ok = matches!(&lhs.kind, ExprKind::Dot { order: 1, wrt: None, .. });
            let rhs_ok = match rhs.kind {
                ExprKind::Lit(Literal::Integer(1)) => true,
                ExprKind::Lit(Literal::Real(x)) => x == 1.0,
                _ => false,
            };
            if !(order_ok && rhs_ok) {
                out.push(err(
                    "constraint.clock",
                    *span,
                    format!("controller `{controller}`: dynamic `{}` must only contain clocks dot(x,1) == 1", f.name),
                ));
            }
        }
    }
    out
}

fn check_user_interface(t: &ClassTable, name: &str, iface: &str, out: &mut Vec<Diagnostic>) {
    let Some(decl) = t.interfaces.get(iface) else { return };
    let c = &t.classes[name].decl;
    for item in &decl.items {
        match item {
            InterfaceItem::Method { name: m, .. } => {
                if !t.methods(name).iter().any(|x| &x.name == m) {
                    out.push(err("interface.method", c.span, format!("`{name}` lacks method `{m}()` required by `{iface}`")));
                }
            }
            InterfaceItem::Requires { name: r, lo, hi, ty, .. } => {
                let want = t.sem_type(ty);
                let n = t.fields(name).iter().filter(|f| is_subtype(&f.effective, &want, t)).count() as u32;
                if n < *lo || hi.is_some_and(|h| n > h) {
                    let hi = hi.map_or("*".to_string(), |h| h.to_string());
                    out.push(err(
                        "cardinality.requires",
                        c.span,
                        format!("`{name}` has {n} field(s) of type {want}; `{iface}` requires {r}[{lo}..{hi}]"),
                    ));
                }
            }
            InterfaceItem::Constraint { name: k, span } => {
                if k == "clock" {
                    out.extend(check_clock_constraint(t, name));
                } else {
                    out.push(Diagnostic::warning("constraint.unknown", *span, format!("unknown constraint `{k}` is ignored")));
                }
            }
            InterfaceItem::Block { kind, .. } => {
                if t.blocks(name, *kind).is_empty() {
                    out.push(err("interface.block", c.span, format!("`{name}` lacks the {} block required by `{iface}`", kind.keyword())));
                }
            }
        }
    }
}
