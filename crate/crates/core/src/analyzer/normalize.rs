//! Default meanings for omitted or abbreviated constructs.
//!
//! * Condition entries are joined into one conjunction.
//! * `Discrete` bodies are tagged parallel or sequential by interface.
//! * `start()` calls in `Init` become one parallel start.
//! * Component-level `a || b` statements are dropped once starts exist.
//! * Empty or missing Condition and Invariant blocks become `True`.
//! * An empty action slot becomes `Skip`.

use crate::ast::*;
use crate::diag::Span;

use super::table::ClassTable;

pub fn normalize_dbc(unit: &CompilationUnit, t: &ClassTable) -> CompilationUnit {
    let decls = unit
        .decls
        .iter()
        .map(|d| match d {
            Decl::Class(c) => Decl::Class(normalize_class(c, t)),
            other => other.clone(),
        })
        .collect();
    CompilationUnit { decls }
}

fn truth(span: Span) -> Expr {
    Expr::lit(Literal::Boolean(true), span)
}

fn conjoin(items: Vec<Expr>, span: Span) -> Expr {
    let mut it = items.into_iter();
    let Some(first) = it.next() else { return truth(span) };
    it.fold(first, |acc, e| {
        let s = Span::new(acc.span.line, acc.span.col, acc.span.offset, e.span.end().saturating_sub(acc.span.offset));
        Expr::new(ExprKind::Binary(BinaryOp::And, Box::new(acc), Box::new(e)), s)
    })
}

fn normalize_class(c: &ClassDecl, t: &ClassTable) -> ClassDecl {
    let iface = t.builtin_interface(&c.name);
    let mut c = c.clone();
    let has_starts = c.members.iter().any(|m| match m {
        Member::Method(m) if m.kind == MethodKind::Init => {
            m.body.iter().any(|s| matches!(s, Stmt::Start(_) | Stmt::ParallelStart(..)))
        }
        _ => false,
    });
    for m in &mut c.members {
        match m {
            Member::Block(b) if b.items.is_empty() => b.items.push(truth(b.span)),
            Member::Method(m) => match m.kind {
                MethodKind::Discrete => {
                    let parallel = t.type_implements(
                        &crate::types::SemType::Class(c.name.clone()),
                        BuiltinInterface::ParallelAssignment,
                    );
                    m.mode = Some(if parallel { AssignMode::Parallel } else { AssignMode::Sequential });
                }
                MethodKind::Composition => {
                    for s in &mut m.body {
                        if let Stmt::Composition(e) = s {
                            normalize_entry(e);
                        }
                    }
                }
                MethodKind::Init => merge_starts(&mut m.body),
                _ => {}
            },
            Member::Constructor(k) if has_starts && iface == Some(BuiltinInterface::System) => {
                k.body.retain(|s| !matches!(s, Stmt::Parallel(ps, _) if ps.iter().all(|p| p.segments.len() == 1)));
            }
            _ => {}
        }
    }
    if iface == Some(BuiltinInterface::Dynamic) && t.blocks(&c.name, BlockKind::Invariant).is_empty() {
        c.members.push(Member::Block(Block { kind: BlockKind::Invariant, items: vec![truth(c.span)], span: c.span }));
    }
    c
}

fn normalize_entry(e: &mut CompositionEntry) {
    if e.action == Slot::Empty {
        e.action = Slot::Skip;
    }
    let mut items = Vec::new();
    let mut span = e.span;
    let mut rest = Vec::new();
    let mut first = true;
    for s in e.body.drain(..) {
        match s {
            Stmt::Block(b) if b.kind == BlockKind::Condition => {
                if first {
                    span = b.span;
                    first = false;
                }
                items.extend(b.items);
            }
            other => rest.push(other),
        }
    }
    let guard = conjoin(items, span);
    e.body = vec![Stmt::Block(Block { kind: BlockKind::Condition, items: vec![guard], span })];
    e.body.extend(rest);
}

fn merge_starts(body: &mut Vec<Stmt>) {
    let mut paths = Vec::new();
    let mut at = None;
    let mut span = Span::default();
    let mut kept = Vec::new();
    for s in body.drain(..) {
        match s {
            Stmt::Start(p) => {
                if at.is_none() {
                    at = Some(kept.len());
                    span = p.span;
                }
                paths.push(p);
            }
            Stmt::ParallelStart(ps, sp) => {
                if at.is_none() {
                    at = Some(kept.len());
                    span = sp;
                }
                paths.extend(ps);
            }
            other => kept.push(other),
        }
    }
    if let Some(i) = at {
        kept.insert(i, Stmt::ParallelStart(paths, span));
    }
    *body = kept;
}

#[cfg(test)]
mod tests {
    use super::super::table::lift_anonymous;
    use super::*;
    use crate::parser::parse_source;
    use crate::pretty::pretty;

    fn normalized(src: &str) -> (CompilationUnit, ClassTable) {
        let u = lift_anonymous(&parse_source(src).unwrap());
        let (t, _) = ClassTable::build(&u);
        let n = normalize_dbc(&u, &t);
        let (t2, _) = ClassTable::build(&n);
        (n, t2)
    }

    #[test]
    fn conditions_join_and_empty_action_becomes_skip() {
        let (_, t) = normalized(
            "Plant P{ Real h,v; Dynamic a; Composition(){ C(a, , a){ Condition{ h==0; v>1; }; }; D(a,Skip,a){ Condition{}; }; } }",
        );
        let entries = t.compositions("P");
        assert_eq!(entries[0].action, Slot::Skip);
        let Stmt::Block(b) = &entries[0].body[0] else { panic!() };
        assert_eq!(b.items.len(), 1);
        assert_eq!(crate::pretty::pretty_expr(&b.items[0]), "h == 0 and v > 1");
        let Stmt::Block(b) = &entries[1].body[0] else { panic!() };
        assert_eq!(b.items[0].kind, ExprKind::Lit(Literal::Boolean(true)));
    }

    #[test]
    fn bouncing_ball_normal_form() {
        let (n, t) = normalized(include_str!("../../models/bouncing_ball.apr"));
        assert_eq!(t.method("Jump", MethodKind::Discrete).unwrap().mode, Some(AssignMode::Parallel));
        let init = t.method("BouncingBall", MethodKind::Init).unwrap();
        assert!(matches!(&init.body[1], Stmt::ParallelStart(p, _) if p.len() == 2));
        assert_eq!(init.body.len(), 2);
        let ctor = t.constructors("BouncingBall")[0];
        assert_eq!(ctor.body.len(), 1, "component-level parallel statement is dropped");
        assert_eq!(t.blocks("God.idle", BlockKind::Invariant).len(), 1);
        // idempotence
        let again = normalize_dbc(&n, &t);
        assert_eq!(pretty(&again), pretty(&n));
        assert_eq!(again, n);
    }
}
