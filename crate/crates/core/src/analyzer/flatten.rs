//! Instantiates a checked system and extracts the hybrid automaton the
//! simulator runs: components, their modes and flows, transitions and the
//! synchronized transition groups.

use thiserror::Error;

use super::{Checked, ClassTable};
use crate::ast::*;
use crate::config::Prefix;
use crate::diag::{Diagnostic, Span};
use crate::eval::{Ctx, Evaluator};
use crate::sos::{Run, Sos, SosError, StepRecord, Started};
use crate::store::Store;
use crate::types::SemType;
use crate::value::{Loc, ObjId, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlattenError {
    #[error(transparent)]
    Runtime(#[from] SosError),
    #[error("no System class named `{0}`")]
    NoSystem(String),
    #[error("`{path}` does not name a Dynamic of a component")]
    StartTarget { path: String, span: Span },
    #[error("component `{component}` has no composition `{name}`")]
    UnknownComposition { component: String, name: String, span: Span },
    #[error("component `{0}` is never started")]
    NotStarted(String),
    #[error("unsupported by the simulator: {what}")]
    Unsupported { what: String, span: Span },
}

impl FlattenError {
    pub fn rule(&self) -> &str {
        match self {
            FlattenError::Runtime(e) => e.rule(),
            FlattenError::NoSystem(_) => "sim.no_system",
            FlattenError::StartTarget { .. } => "init.start_target",
            FlattenError::UnknownComposition { .. } => "sync.unknown_composition",
            FlattenError::NotStarted(_) => "init.missing_start",
            FlattenError::Unsupported { .. } => "sim.unsupported",
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        let span = match self {
            FlattenError::Runtime(e) => e.span(),
            FlattenError::StartTarget { span, .. }
            | FlattenError::UnknownComposition { span, .. }
            | FlattenError::Unsupported { span, .. } => *span,
            FlattenError::NoSystem(_) | FlattenError::NotStarted(_) => Span::default(),
        };
        Diagnostic::error(self.rule(), span, self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Plant,
    Controller,
}

/// Right-hand side of a first-order equation.
#[derive(Debug, Clone, PartialEq)]
pub enum OdeRhs {
    Expr(Expr),
    /// Generated link `v_k' = v_{k+1}` of a higher-order chain.
    Chain(Loc),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ode {
    /// Display name: `height`, or `x_1` for a generated chain variable.
    pub name: String,
    pub state: Loc,
    pub rhs: OdeRhs,
    /// Where the current derivative value is published so `dot(v,n)` can be
    /// read; `None` for chain links, whose derivative is itself a state.
    pub slot: Option<Loc>,
    /// State is a generated chain variable rather than a declared one.
    pub generated: bool,
}

/// A Dynamic instance: flows plus invariant, both evaluated with `this = obj`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub name: String,
    pub obj: ObjId,
    pub class: String,
    pub odes: Vec<Ode>,
    pub invariant: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Skip,
    Assign { name: String, obj: ObjId, class: String, mode: AssignMode, body: Vec<Stmt> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Mode(usize),
    Subsystem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub name: String,
    pub source: Endpoint,
    pub action: Action,
    pub target: Endpoint,
    /// Conjunction, evaluated with `this` = the component.
    pub guard: Vec<Expr>,
    pub span: Span,
}

/// A System owned by a plant, run while the plant sits in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub field: String,
    pub obj: ObjId,
    pub class: String,
    /// Indices into [`HybridModel::components`].
    pub components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Dotted path from the top system, `ball` or `tank.sub.valve`.
    pub name: String,
    pub role: Role,
    pub obj: ObjId,
    pub class: String,
    pub modes: Vec<Mode>,
    pub transitions: Vec<Transition>,
    /// `None` for components of a subsystem until it is entered.
    pub initial: Option<Endpoint>,
    pub subsystem: Option<Subsystem>,
    /// Owning plant when this component belongs to a subsystem.
    pub parent: Option<usize>,
    /// Reserved waiting-time clock.
    pub tw: Loc,
}

/// Transitions that must fire together, as (component, transition) indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncGroup {
    pub members: Vec<(usize, usize)>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub store: Store,
    pub system: ObjId,
    pub system_class: String,
    pub components: Vec<Component>,
    pub syncs: Vec<SyncGroup>,
    pub init_log: Vec<StepRecord>,
    /// Non-fatal observations, e.g. chain variables defaulted to zero.
    pub notes: Vec<String>,
}

impl HybridModel {
    pub fn component(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    /// Maps a started Dynamic to (component, mode).
    pub fn locate_start(&self, s: &Started) -> Option<(usize, usize)> {
        self.components.iter().enumerate().find_map(|(i, c)| {
            (c.obj == s.owner).then(|| c.modes.iter().position(|m| m.obj == s.dynamic).map(|k| (i, k))).flatten()
        })
    }

    /// Sync group containing a transition, if any.
    pub fn sync_of(&self, comp: usize, tr: usize) -> Option<usize> {
        self.syncs.iter().position(|g| g.members.contains(&(comp, tr)))
    }
}

fn reference(store: &Store, obj: ObjId, field: &str) -> Option<ObjId> {
    match store.read(store.field(obj, field)?) {
        Value::Reference(o) => Some(*o),
        _ => None,
    }
}

struct Builder<'a> {
    table: &'a ClassTable,
    eval: &'a Evaluator,
    store: Store,
    components: Vec<Component>,
    syncs: Vec<SyncGroup>,
    notes: Vec<String>,
}

impl Builder<'_> {
    fn implements(&self, obj: ObjId, i: BuiltinInterface) -> bool {
        self.table.type_implements(&SemType::Class(self.store.object(obj).class.clone()), i)
    }

    /// Fields holding objects that implement `i`, in declaration order.
    fn members(&self, obj: ObjId, i: BuiltinInterface) -> Vec<(String, ObjId)> {
        let class = &self.store.object(obj).class;
        self.table
            .fields(class)
            .into_iter()
            .filter_map(|f| reference(&self.store, obj, &f.name).map(|o| (f.name, o)))
            .filter(|(_, o)| self.implements(*o, i))
            .collect()
    }

    fn system(&mut self, sys: ObjId, prefix: &str, parent: Option<usize>) -> Result<Vec<usize>, FlattenError> {
        let mut idx = Vec::new();
        let mut by_field = Vec::new();
        for role in [Role::Plant, Role::Controller] {
            let iface = if role == Role::Plant { BuiltinInterface::Plant } else { BuiltinInterface::Controller };
            for (field, obj) in self.members(sys, iface) {
                let name = if prefix.is_empty() { field.clone() } else { format!("{prefix}.{field}") };
                let i = self.component(name, role, obj, parent)?;
                by_field.push((field, i));
                idx.push(i);
            }
        }
        let class = self.store.object(sys).class.clone();
        for ctor in self.table.constructors(&class) {
            for s in &ctor.body {
                let Stmt::Parallel(paths, span) = s else { continue };
                if paths.iter().all(|p| p.segments.len() == 1) {
                    continue;
                }
                let mut members = Vec::new();
                for p in paths {
                    let unknown = || FlattenError::UnknownComposition { component: p.dotted(), name: String::new(), span: p.span };
                    let [comp, tr] = p.segments.as_slice() else { return Err(unknown()) };
                    let ci = by_field.iter().find(|(f, _)| f == comp).map(|(_, i)| *i).ok_or_else(unknown)?;
                    let ti = self.components[ci].transitions.iter().position(|t| &t.name == tr).ok_or_else(|| {
                        FlattenError::UnknownComposition { component: comp.clone(), name: tr.clone(), span: p.span }
                    })?;
                    members.push((ci, ti));
                }
                self.syncs.push(SyncGroup { members, span: *span });
            }
        }
        Ok(idx)
    }

    fn component(&mut self, name: String, role: Role, obj: ObjId, parent: Option<usize>) -> Result<usize, FlattenError> {
        let class = self.store.object(obj).class.clone();
        let mut modes = Vec::new();
        for (field, d) in self.members(obj, BuiltinInterface::Dynamic) {
            modes.push(self.mode(field, d)?);
        }
        let tw = self.store.fresh_with(Value::Real(0.0), SemType::REAL);
        self.store.add_field(obj, "tw", tw);
        let i = self.components.len();
        self.components.push(Component {
            name: name.clone(),
            role,
            obj,
            class: class.clone(),
            modes,
            transitions: Vec::new(),
            initial: None,
            subsystem: None,
            parent,
            tw,
        });
        let subs = self.members(obj, BuiltinInterface::System);
        if let Some((field, sub)) = subs.into_iter().next() {
            if parent.is_some() {
                let span = self.table.field(&class, &field).map(|f| f.span).unwrap_or_default();
                return Err(FlattenError::Unsupported { what: format!("subsystem `{name}.{field}`: depth>1 unsupported"), span });
            }
            let comps = self.system(sub, &format!("{name}.{field}"), Some(i))?;
            let sub_class = self.store.object(sub).class.clone();
            self.components[i].subsystem = Some(Subsystem { field, obj: sub, class: sub_class, components: comps });
        }
        let transitions = self.transitions(i)?;
        self.components[i].transitions = transitions;
        Ok(i)
    }

    fn mode(&mut self, name: String, obj: ObjId) -> Result<Mode, FlattenError> {
        let class = self.store.object(obj).class.clone();
        let mut odes = Vec::new();
        if let Some(m) = self.table.method(&class, MethodKind::Continuous) {
            for s in &m.body {
                let Stmt::Equation { lhs, rhs, span } = s else { continue };
                let ExprKind::Dot { var, wrt, order } = &lhs.kind else { continue };
                if wrt.is_some() {
                    return Err(FlattenError::Unsupported {
                        what: "derivative with respect to a variable other than time".into(),
                        span: *span,
                    });
                }
                let base = self.eval.locate(var, Ctx::new(&self.store, Some(obj))).map_err(SosError::from)?;
                let label = crate::pretty::pretty_expr(var);
                let mut state = base;
                for k in 1..*order {
                    let (next, _) = self.store.derivative_location(base, k);
                    let n = if k == 1 { label.clone() } else { format!("{label}_{}", k - 1) };
                    odes.push(Ode { name: n, state, rhs: OdeRhs::Chain(next), slot: None, generated: k > 1 });
                    state = next;
                }
                let (slot, _) = self.store.derivative_location(base, *order);
                let n = if *order == 1 { label.clone() } else { format!("{label}_{}", order - 1) };
                odes.push(Ode { name: n, state, rhs: OdeRhs::Expr(rhs.clone()), slot: Some(slot), generated: *order > 1 });
            }
        }
        let invariant = self.table.blocks(&class, BlockKind::Invariant).into_iter().flat_map(|b| b.items.clone()).collect();
        Ok(Mode { name, obj, class, odes, invariant })
    }

    fn transitions(&self, ci: usize) -> Result<Vec<Transition>, FlattenError> {
        let c = &self.components[ci];
        let endpoint = |slot: &Slot, span: Span| -> Result<Endpoint, FlattenError> {
            let bad = || FlattenError::Unsupported { what: "composition endpoint is not a Dynamic or the subsystem".into(), span };
            let Slot::Path(p) = slot else { return Err(bad()) };
            let [name] = p.segments.as_slice() else { return Err(bad()) };
            if let Some(k) = c.modes.iter().position(|m| &m.name == name) {
                return Ok(Endpoint::Mode(k));
            }
            match &c.subsystem {
                Some(s) if &s.field == name => Ok(Endpoint::Subsystem),
                _ => Err(bad()),
            }
        };
        let mut out = Vec::new();
        for e in self.table.compositions(&c.class) {
            let source = endpoint(&e.source, e.span)?;
            let target = endpoint(&e.target, e.span)?;
            let action = match &e.action {
                Slot::Path(p) => {
                    let field = p.dotted();
                    match reference(&self.store, c.obj, &field) {
                        Some(o) => {
                            let class = self.store.object(o).class.clone();
                            let m = self.table.method(&class, MethodKind::Discrete).ok_or_else(|| FlattenError::Unsupported {
                                what: format!("assignment `{field}` has no Discrete()"),
                                span: p.span,
                            })?;
                            Action::Assign {
                                name: field,
                                obj: o,
                                class,
                                mode: m.mode.unwrap_or(AssignMode::Sequential),
                                body: m.body.clone(),
                            }
                        }
                        // `Assignment reset = Skip;`
                        None => Action::Skip,
                    }
                }
                Slot::Skip | Slot::Empty => Action::Skip,
            };
            let guard = e
                .body
                .iter()
                .filter_map(|s| match s {
                    Stmt::Block(b) if b.kind == BlockKind::Condition => Some(b.items.clone()),
                    _ => None,
                })
                .flatten()
                .collect();
            out.push(Transition { name: e.name.clone(), source, action, target, guard, span: e.span });
        }
        Ok(out)
    }

    /// Sets the initial endpoint of each started component.
    fn apply_starts(&mut self, starts: &[Started], span: Span) -> Result<(), FlattenError> {
        for s in starts {
            let hit = self.components.iter().enumerate().find_map(|(i, c)| {
                (c.obj == s.owner).then(|| c.modes.iter().position(|m| m.obj == s.dynamic).map(|k| (i, k))).flatten()
            });
            let (i, k) = hit.ok_or_else(|| FlattenError::StartTarget { path: s.path.join("."), span })?;
            self.components[i].initial = Some(Endpoint::Mode(k));
        }
        Ok(())
    }

    /// Chain variables nobody initialized start at zero.
    fn default_chain_states(&mut self) {
        let mut fixed = Vec::new();
        for c in &self.components {
            for m in &c.modes {
                for o in &m.odes {
                    if o.generated && self.store.read(o.state).is_null() {
                        fixed.push((o.state, format!("{}.{}: chain variable `{}` defaults to 0", c.name, m.name, o.name)));
                    }
                }
            }
        }
        for (loc, note) in fixed {
            self.store.init(loc, Value::Real(0.0));
            self.notes.push(note);
        }
    }
}

/// Creates the system object, runs constructors and `Init`, and extracts the
/// automaton. `system` picks a System class by name; the first is used otherwise.
pub fn flatten(checked: &Checked, eval: &Evaluator, system: Option<&str>) -> Result<HybridModel, FlattenError> {
    let systems = checked.systems();
    let system_class = match system {
        Some(s) => systems.iter().find(|c| *c == s).cloned().ok_or_else(|| FlattenError::NoSystem(s.into()))?,
        None => systems.first().cloned().ok_or_else(|| FlattenError::NoSystem(String::new()))?,
    };
    let table = &checked.table;
    let sos = Sos::new(table, eval);
    let mut store = Store::new();
    let sys = {
        let mut run = Run::new(&mut store, Prefix::root("system"));
        sos.create_object(&mut run, &system_class, &[], None, Span::default())?
    };
    let mut b = Builder { table, eval, store, components: Vec::new(), syncs: Vec::new(), notes: Vec::new() };
    // nested systems are created by their owners; only the top one is a root
    let top = b.system(sys, "", None)?;
    let init_span = table.method(&system_class, MethodKind::Init).map(|m| m.span).unwrap_or_default();
    let (starts, init_log) = {
        let mut run = Run::new(&mut b.store, Prefix::root("system")).logging();
        let starts = sos.run_init(&mut run, sys)?;
        (starts, run.log.take().unwrap_or_default())
    };
    b.apply_starts(&starts, init_span)?;
    for &i in &top {
        if b.components[i].initial.is_none() {
            return Err(FlattenError::NotStarted(b.components[i].name.clone()));
        }
    }
    b.default_chain_states();
    Ok(HybridModel {
        store: b.store,
        system: sys,
        system_class,
        components: b.components,
        syncs: b.syncs,
        init_log,
        notes: b.notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::check;
    use crate::eval::{ExternalFn, Externals};
    use crate::parser::parse_source;

    fn build(src: &str) -> Result<HybridModel, FlattenError> {
        let mut x = Externals::new();
        x.insert(ExternalFn::parse("Resiliency/3=k*mass*abs(velocity)").unwrap());
        let checked = check(&parse_source(src).unwrap(), &x).expect("check");
        flatten(&checked, &Evaluator::new(x), None)
    }

    #[test]
    fn bouncing_ball_structure() {
        let m = build(include_str!("../../models/bouncing_ball_corrected.apr")).unwrap();
        let names: Vec<&str> = m.components.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["ball", "god"]);
        let ball = &m.components[0];
        assert_eq!(ball.role, Role::Plant);
        assert_eq!(ball.initial, Some(Endpoint::Mode(0)));
        let moving = &ball.modes[0];
        let odes: Vec<&str> = moving.odes.iter().map(|o| o.name.as_str()).collect();
        assert_eq!(odes, ["height", "velocity"]);
        assert_eq!(moving.invariant.len(), 2);
        assert_eq!(ball.transitions[0].name, "CompMJ");
        assert!(matches!(ball.transitions[0].action, Action::Assign { mode: AssignMode::Parallel, .. }));
        let god = &m.components[1];
        assert_eq!(god.role, Role::Controller);
        assert!(matches!(god.transitions[0].action, Action::Skip));
        assert_eq!(m.syncs.len(), 1);
        assert_eq!(m.syncs[0].members, vec![(1, 0), (0, 0)]);
    }

    #[test]
    fn shared_variables_are_one_location() {
        let m = build(include_str!("../../models/bouncing_ball_corrected.apr")).unwrap();
        let h_sys = m.store.resolve(m.store.field(m.system, "height").unwrap());
        let h_ode = m.store.resolve(m.components[0].modes[0].odes[0].state);
        assert_eq!(h_sys, h_ode);
        assert_eq!(*m.store.read(h_ode), Value::Real(15.0));
    }

    const SECOND_ORDER: &str = "
        Plant Fall{ Real x,g;
            Fall(Real x, Real g){ this.x = x; this.g = g; }
            Dynamic falling = new Dynamic(){ Continuous(){ dot(x,2) == -g; } Invariant{ x in [0,100]; }; };
            Assignment a = Skip;
            Composition(){ Land(falling,a,falling){ Condition{ x <= 0; }; }; } }
        Controller Clock{ Real t;
            Clock(Real t){ this.t = t; }
            Dynamic ticking = new Dynamic(){ Continuous(){ dot(t,1) == 1; } };
            Assignment r = Skip;
            Composition(){ Tick(ticking,r,ticking){ Condition{ t >= 1000; }; }; } }
        System S{ Real x,t; Constant real g = 9.8;
            Plant p = new Fall(x,g); Controller c = new Clock(t);
            S(){ p || c; }
            Init(){ x = 10, t = 0; p.falling.start(); c.ticking.start(); } }";

    #[test]
    fn higher_order_becomes_a_chain() {
        let m = build(SECOND_ORDER).unwrap();
        let odes = &m.components[0].modes[0].odes;
        let names: Vec<&str> = odes.iter().map(|o| o.name.as_str()).collect();
        assert_eq!(names, ["x", "x_1"]);
        let OdeRhs::Chain(next) = odes[0].rhs else { panic!("expected chain link") };
        assert_eq!(next, odes[1].state);
        assert!(matches!(odes[1].rhs, OdeRhs::Expr(_)));
        assert_eq!(*m.store.read(odes[1].state), Value::Real(0.0));
        assert_eq!(m.notes.len(), 1);
    }

    #[test]
    fn missing_sync_composition_is_reported() {
        let src = include_str!("../../models/bouncing_ball_corrected.apr").replace("god.CompIR || ball.CompMJ", "god.CompXX || ball.CompMJ");
        let mut x = Externals::new();
        x.insert(ExternalFn::parse("Resiliency/3=k*mass*abs(velocity)").unwrap());
        match check(&parse_source(&src).unwrap(), &x) {
            Err(d) => assert!(d.iter().any(|d| d.rule == "sync.unknown_composition")),
            Ok(c) => {
                let e = flatten(&c, &Evaluator::new(x), None).unwrap_err();
                assert_eq!(e.rule(), "sync.unknown_composition");
            }
        }
    }
}
