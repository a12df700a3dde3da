//! Hybrid simulation of a flattened model.
//!
//! Flows advance on a fixed grid with classical RK4. Inside a step, invariant
//! exits and guard crossings are located by bisection and the step is split
//! there. At every instant the enabled compositions are offered to the policy.
//!
//! Guards are edge-triggered: a composition that fired or was declined is
//! disarmed until its guard evaluates false again; a declined one is also
//! offered again once its flow reaches the invariant border. An `==`
//! guard on continuous variables counts as reached once the difference of its
//! sides is within `value_tol` or has changed sign.

pub mod explore;
pub mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analyzer::{Action, ClassTable, Endpoint, HybridModel, Ode, OdeRhs};
use crate::ast::{BinaryOp, Expr, ExprKind};
use crate::config::Prefix;
use crate::diag::{Diagnostic, Span};
use crate::eval::{Ctx, ErrorKind, EvalError, Evaluator};
use crate::ode::{bisect, Probe, Rk4};
use crate::sos::{Run, Sos, SosError, StepRecord};
use crate::store::Store;
use crate::value::{Loc, ObjId, Value};

pub use explore::{explore, Leaf, Node, Tree};
pub use trace::{Event, EventKind, Format, Sample, Termination, Trace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Take the first enabled item.
    Eager,
    /// Jump only when a flow cannot continue.
    Lazy,
    /// Seeded uniform choice among the enabled items and continuing.
    Random { seed: u64 },
    /// Fork at every choice; see [`explore`].
    Explore { max_branches: usize, max_jumps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub event_tol: f64,
    pub value_tol: f64,
    pub policy: Policy,
    pub max_jumps_per_instant: usize,
    /// Keep a [`StepRecord`] for every discrete step.
    pub step_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_end: 10.0,
            dt: 1e-3,
            event_tol: 1e-9,
            value_tol: 1e-9,
            policy: Policy::Eager,
            max_jumps_per_instant: 16,
            step_log: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be non-negative");
        }
        if !(self.event_tol > 0.0 && self.value_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("more than {limit} jumps at t={time}")]
    ZenoGuard { time: f64, limit: usize },
    #[error("{error} at t={time}")]
    Runtime { error: SosError, time: f64 },
    #[error("{error} at t={time}")]
    Eval { error: EvalError, time: f64 },
    #[error("`{name}` is not finite at t={time}")]
    NumericOverflow { name: String, time: f64 },
    #[error("invariant of `{component}.{mode}` is false at t={time}")]
    InvariantBreach { component: String, mode: String, time: f64 },
    #[error("`{name}` is driven by two active flows at t={time}")]
    FlowConflict { name: String, time: f64 },
    #[error("`{name}` is null when its flow starts at t={time}")]
    Uninitialized { name: String, time: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl SimError {
    pub fn rule(&self) -> &str {
        match self {
            SimError::ZenoGuard { .. } => "ZenoGuard",
            SimError::Runtime { error, .. } => error.rule(),
            SimError::Eval { error, .. } => error.kind.name(),
            SimError::NumericOverflow { .. } => "NumericOverflow",
            SimError::InvariantBreach { .. } => "InvariantBreach",
            SimError::FlowConflict { .. } => "FlowConflict",
            SimError::Uninitialized { .. } => "Uninitialized",
            SimError::Config(_) => "Config",
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        let span = match self {
            SimError::Runtime { error, .. } => error.span(),
            SimError::Eval { error, .. } => error.span,
            _ => Span::default(),
        };
        Diagnostic::error(self.rule(), span, self.to_string())
    }
}

type SResult<T> = Result<T, SimError>;

/// An enabled composition, alone or as a synchronized group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Item {
    Solo { component: usize, transition: usize },
    Sync { group: usize },
}

/// What the policy chooses from at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub items: Vec<Item>,
    /// False when some flow has reached its invariant border.
    pub can_continue: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Jump(usize),
    Continue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stop {
    Decision(Decision),
    End(Termination),
}

/// Edge-trigger state of one composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Armed,
    /// Fired; waits for its guard to turn false.
    Fired,
    /// Offered and passed over; offered again when the flow reaches its border.
    Declined,
}

/// Result of [`Simulator::check_invariant_horizon`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Ok,
    Hit(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub store: Store,
    pub active: Vec<Option<Endpoint>>,
    pub waiting: Vec<bool>,
    /// Component whose flow reached its invariant border at this instant.
    pub hit: Vec<bool>,
    pub armed: Vec<Vec<Arm>>,
    pub jumps_at_instant: usize,
    pub jumps: usize,
    instant: f64,
    grid: u64,
    pub log: Vec<StepRecord>,
}

/// Trace plus the discrete step log of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub trace: Trace,
    pub log: Vec<StepRecord>,
}

struct Flow<'a> {
    comp: usize,
    ode: &'a Ode,
    this: ObjId,
    state: Loc,
}

struct Snap {
    time: f64,
    y: Vec<f64>,
    tw: Vec<(usize, f64)>,
}

/// Things watched across one step.
struct Watch {
    /// Component and the margin at or below which its invariant counts as hit.
    invs: Vec<(usize, f64)>,
    /// Armed guards that were false at the step start, with their `==` differences then.
    guards: Vec<(usize, usize, Vec<Option<f64>>)>,
    /// Disarmed guards that were true at the step start; the step is split
    /// where one turns false so it can re-arm.
    rearms: Vec<(usize, usize)>,
}

struct Triggered {
    hits: Vec<usize>,
    guards: usize,
    rearms: usize,
    /// Every triggered item is within tolerance of its event.
    observable: bool,
}

impl Triggered {
    fn any(&self) -> bool {
        !self.hits.is_empty() || self.guards > 0 || self.rearms > 0
    }
}

const MAX_BISECTIONS: usize = 200;

fn as_f64(v: &Value, span: Span) -> Result<f64, EvalError> {
    match v {
        Value::Real(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        Value::Inf => Ok(f64::INFINITY),
        Value::NegInf => Ok(f64::NEG_INFINITY),
        Value::Null => Err(EvalError::new(ErrorKind::NullOperand, span)),
        other => Err(EvalError::new(ErrorKind::TypeMismatch(format!("expected a number, found {}", other.type_name())), span)),
    }
}

fn column_value(v: &Value) -> Option<f64> {
    match v {
        Value::Real(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        Value::Boolean(b) => Some(if *b { 1.0 } else { 0.0 }),
        Value::Inf => Some(f64::INFINITY),
        Value::NegInf => Some(f64::NEG_INFINITY),
        _ => None,
    }
}

pub struct Simulator<'m> {
    pub model: &'m HybridModel,
    table: &'m ClassTable,
    strict: Evaluator,
    relaxed: Evaluator,
    pub cfg: SimConfig,
    columns: Vec<(String, Loc)>,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m HybridModel, table: &'m ClassTable, eval: &Evaluator, cfg: SimConfig) -> SResult<Self> {
        cfg.validate()?;
        let mut columns: Vec<(String, Loc)> = Vec::new();
        for c in &model.components {
            for f in table.fields(&c.class) {
                if f.declared.prim().is_none() {
                    continue;
                }
                if let Some(loc) = model.store.field(c.obj, &f.name) {
                    columns.push((format!("{}.{}", c.name, f.name), loc));
                }
            }
            columns.push((format!("{}.tw", c.name), c.tw));
            for m in &c.modes {
                for o in m.odes.iter().filter(|o| o.generated) {
                    let name = format!("{}.{}", c.name, o.name);
                    if !columns.iter().any(|(n, _)| *n == name) {
                        columns.push((name, o.state));
                    }
                }
            }
        }
        Ok(Simulator { model, table, strict: eval.relaxed(0.0), relaxed: eval.relaxed(cfg.value_tol), cfg, columns })
    }

    fn n(&self) -> usize {
        self.model.components.len()
    }

    fn at_eval(&self, time: f64) -> impl Fn(EvalError) -> SimError {
        move |error| SimError::Eval { error, time }
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn empty_trace(&self) -> Trace {
        Trace {
            columns: self.column_names(),
            components: self.model.components.iter().map(|c| c.name.clone()).collect(),
            ..Trace::default()
        }
    }

    pub fn values(&self, store: &Store) -> Vec<Option<f64>> {
        self.columns.iter().map(|(_, l)| column_value(store.read(*l))).collect()
    }

    pub fn sample(&self, st: &SimState) -> Sample {
        let modes = self
            .model
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| match st.active[i] {
                None => "-".to_string(),
                Some(Endpoint::Subsystem) => format!("@{}", c.subsystem.as_ref().map_or("", |s| s.field.as_str())),
                Some(Endpoint::Mode(k)) if st.waiting[i] => format!("{}:waiting", c.modes[k].name),
                Some(Endpoint::Mode(k)) => c.modes[k].name.clone(),
            })
            .collect();
        Sample { time: st.time, values: self.values(&st.store), modes }
    }

    pub fn initial_state(&self) -> SResult<SimState> {
        let m = self.model;
        let st = SimState {
            time: 0.0,
            store: m.store.clone(),
            active: m.components.iter().map(|c| c.initial).collect(),
            waiting: vec![false; self.n()],
            hit: vec![false; self.n()],
            armed: m.components.iter().map(|c| vec![Arm::Armed; c.transitions.len()]).collect(),
            jumps_at_instant: 0,
            jumps: 0,
            instant: 0.0,
            grid: 0,
            log: if self.cfg.step_log { m.init_log.clone() } else { Vec::new() },
        };
        for c in 0..self.n() {
            if let Some(Endpoint::Mode(k)) = st.active[c] {
                if self.mode_margin(&st.store, c, k).map_err(self.at_eval(0.0))? < -self.cfg.value_tol {
                    return Err(self.breach(c, k, 0.0));
                }
            }
        }
        Ok(st)
    }

    fn breach(&self, c: usize, k: usize, time: f64) -> SimError {
        let comp = &self.model.components[c];
        SimError::InvariantBreach { component: comp.name.clone(), mode: comp.modes[k].name.clone(), time }
    }

    // --- flows ----------------------------------------------------------------

    fn active_flows(&self, st: &SimState) -> SResult<Vec<Flow<'m>>> {
        let mut flows: Vec<Flow<'m>> = Vec::new();
        for (c, comp) in self.model.components.iter().enumerate() {
            if st.waiting[c] {
                continue;
            }
            let Some(Endpoint::Mode(k)) = st.active[c] else { continue };
            let mode = &comp.modes[k];
            for ode in &mode.odes {
                let state = st.store.resolve(ode.state);
                let name = format!("{}.{}", comp.name, ode.name);
                if flows.iter().any(|f| f.state == state) {
                    return Err(SimError::FlowConflict { name, time: st.time });
                }
                if as_f64(st.store.read(state), Span::default()).is_err() {
                    return Err(SimError::Uninitialized { name, time: st.time });
                }
                flows.push(Flow { comp: c, ode, this: mode.obj, state });
            }
        }
        Ok(flows)
    }

    fn rate(&self, store: &Store, f: &Flow<'_>) -> Result<f64, EvalError> {
        match &f.ode.rhs {
            OdeRhs::Chain(l) => as_f64(store.read(*l), Span::default()),
            OdeRhs::Expr(e) => as_f64(&self.strict.eval(e, Ctx::new(store, Some(f.this)))?, e.span),
        }
    }

    fn snapshot(&self, st: &SimState, flows: &[Flow<'_>]) -> Snap {
        let y = flows.iter().map(|f| as_f64(st.store.read(f.state), Span::default()).unwrap_or(0.0)).collect();
        let tw = (0..self.n())
            .filter(|&c| st.waiting[c] && st.active[c].is_some())
            .map(|c| (c, as_f64(st.store.read(self.model.components[c].tw), Span::default()).unwrap_or(0.0)))
            .collect();
        Snap { time: st.time, y, tw }
    }

    /// Sets the state to `snap` advanced by one RK4 step of size `tau`.
    fn flow(&self, st: &mut SimState, flows: &[Flow<'_>], snap: &Snap, tau: f64, rk: &mut Rk4<f64>) -> SResult<()> {
        let time = snap.time + tau;
        let mut out = snap.y.clone();
        if tau > 0.0 && !flows.is_empty() {
            let store = &mut st.store;
            rk.step(&snap.y, tau, &mut out, |y, d| {
                for (f, v) in flows.iter().zip(y) {
                    store.init(f.state, Value::Real(*v));
                }
                for (i, f) in flows.iter().enumerate() {
                    d[i] = self.rate(store, f)?;
                }
                Ok(())
            })
            .map_err(self.at_eval(time))?;
        }
        for (f, v) in flows.iter().zip(&out) {
            if !v.is_finite() {
                let name = format!("{}.{}", self.model.components[f.comp].name, f.ode.name);
                return Err(SimError::NumericOverflow { name, time });
            }
            st.store.init(f.state, Value::Real(*v));
        }
        for f in flows {
            if let Some(slot) = f.ode.slot {
                let r = self.rate(&st.store, f).map_err(self.at_eval(time))?;
                st.store.init(slot, Value::Real(r));
            }
        }
        for (c, tw0) in &snap.tw {
            st.store.init(self.model.components[*c].tw, Value::Real(tw0 + tau));
        }
        st.time = time;
        Ok(())
    }

    /// Advances every running flow by `h`; waiting components only advance `tw`.
    pub fn integrate_step(&self, st: &mut SimState, h: f64) -> SResult<()> {
        let flows = self.active_flows(st)?;
        let snap = self.snapshot(st, &flows);
        self.flow(st, &flows, &snap, h, &mut Rk4::new(flows.len()))
    }

    // --- invariants and guards -------------------------------------------------

    /// Smallest distance to an interval bound over the invariant entries;
    /// negative outside. Entries that are not memberships count as ±∞.
    fn margin(&self, store: &Store, this: ObjId, items: &[Expr]) -> Result<f64, EvalError> {
        let ctx = Ctx::new(store, Some(this));
        let mut m = f64::INFINITY;
        for e in items {
            let here = match &e.kind {
                ExprKind::In(v, i) => {
                    let x = as_f64(&self.strict.eval(v, ctx)?, v.span)?;
                    let lo = as_f64(&self.strict.eval(&i.lo, ctx)?, i.lo.span)?;
                    let hi = as_f64(&self.strict.eval(&i.hi, ctx)?, i.hi.span)?;
                    (x - lo).min(hi - x)
                }
                _ if self.strict.eval_bool(e, ctx)? => f64::INFINITY,
                _ => f64::NEG_INFINITY,
            };
            m = m.min(here);
        }
        Ok(m)
    }

    fn mode_margin(&self, store: &Store, c: usize, k: usize) -> Result<f64, EvalError> {
        let mode = &self.model.components[c].modes[k];
        self.margin(store, mode.obj, &mode.invariant)
    }

    fn guard_true(&self, store: &Store, c: usize, t: usize) -> Result<bool, EvalError> {
        let comp = &self.model.components[c];
        self.relaxed.eval_condition(&comp.transitions[t].guard, Ctx::new(store, Some(comp.obj)))
    }

    fn conjuncts(&self, c: usize, t: usize) -> Vec<&'m Expr> {
        self.model.components[c].transitions[t].guard.iter().flat_map(|g| g.conjuncts()).collect()
    }

    /// Signed difference of an `==` conjunct over numbers.
    fn difference(&self, store: &Store, this: ObjId, e: &Expr) -> Result<Option<f64>, EvalError> {
        let ExprKind::Binary(BinaryOp::Eq, a, b) = &e.kind else { return Ok(None) };
        let ctx = Ctx::new(store, Some(this));
        let (x, y) = (self.strict.eval(a, ctx)?, self.strict.eval(b, ctx)?);
        if !(x.is_number() && y.is_number()) {
            return Ok(None);
        }
        Ok(Some(as_f64(&x, a.span)? - as_f64(&y, b.span)?))
    }

    fn differences(&self, store: &Store, c: usize, t: usize) -> Result<Vec<Option<f64>>, EvalError> {
        let this = self.model.components[c].obj;
        self.conjuncts(c, t).into_iter().map(|e| self.difference(store, this, e)).collect()
    }

    /// Whether a guard false at the step start has been reached.
    fn reached(&self, store: &Store, c: usize, t: usize, d0: &[Option<f64>]) -> Result<bool, EvalError> {
        let this = self.model.components[c].obj;
        for (e, start) in self.conjuncts(c, t).into_iter().zip(d0) {
            let ok = match (start, self.difference(store, this, e)?) {
                (Some(s0), Some(d)) => d.abs() <= self.cfg.value_tol || d.signum() != s0.signum(),
                _ => self.strict.eval_bool(e, Ctx::new(store, Some(this)))?,
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn watch(&self, st: &SimState) -> Result<Watch, EvalError> {
        let tol = self.cfg.value_tol;
        let mut w = Watch { invs: Vec::new(), guards: Vec::new(), rearms: Vec::new() };
        for c in 0..self.n() {
            let Some(ep) = st.active[c] else { continue };
            if let (Endpoint::Mode(k), false) = (ep, st.waiting[c]) {
                let m0 = self.mode_margin(&st.store, c, k)?;
                w.invs.push((c, (0.5 * tol).min(m0 - 0.5 * tol)));
            }
            for (t, tr) in self.model.components[c].transitions.iter().enumerate() {
                if tr.source == ep && st.armed[c][t] != Arm::Armed && self.guard_true(&st.store, c, t)? {
                    w.rearms.push((c, t));
                }
            }
            if self.cfg.policy == Policy::Lazy && !st.waiting[c] {
                continue;
            }
            for (t, tr) in self.model.components[c].transitions.iter().enumerate() {
                if tr.source == ep && st.armed[c][t] == Arm::Armed && !self.guard_true(&st.store, c, t)? {
                    w.guards.push((c, t, self.differences(&st.store, c, t)?));
                }
            }
        }
        Ok(w)
    }

    fn triggered(&self, st: &SimState, w: &Watch) -> Result<Triggered, EvalError> {
        let mut out = Triggered { hits: Vec::new(), guards: 0, rearms: 0, observable: true };
        for &(c, limit) in &w.invs {
            let Some(Endpoint::Mode(k)) = st.active[c] else { continue };
            let m = self.mode_margin(&st.store, c, k)?;
            if m <= limit {
                out.hits.push(c);
                out.observable &= m >= -self.cfg.value_tol;
            }
        }
        for (c, t, d0) in &w.guards {
            if self.reached(&st.store, *c, *t, d0)? {
                out.guards += 1;
                out.observable &= self.guard_true(&st.store, *c, *t)?;
            }
        }
        for &(c, t) in &w.rearms {
            if !self.guard_true(&st.store, c, t)? {
                out.rearms += 1;
            }
        }
        Ok(out)
    }

    /// Earliest time within `(t, t+dt]` at which component `c` reaches its
    /// invariant border, located to `event_tol`.
    pub fn check_invariant_horizon(&self, st: &SimState, c: usize, dt: f64) -> SResult<Horizon> {
        let Some(Endpoint::Mode(k)) = st.active[c] else { return Ok(Horizon::Ok) };
        let mut st = st.clone();
        let t0 = st.time;
        let m0 = self.mode_margin(&st.store, c, k).map_err(self.at_eval(t0))?;
        if m0 < -self.cfg.value_tol {
            return Err(self.breach(c, k, t0));
        }
        let flows = self.active_flows(&st)?;
        let snap = self.snapshot(&st, &flows);
        let mut rk = Rk4::new(flows.len());
        let watch = Watch { invs: vec![(c, 0.5 * self.cfg.value_tol)], guards: Vec::new(), rearms: Vec::new() };
        self.flow(&mut st, &flows, &snap, dt, &mut rk)?;
        let trig = self.triggered(&st, &watch).map_err(self.at_eval(st.time))?;
        if !trig.any() {
            return Ok(Horizon::Ok);
        }
        let b = bisect(t0, t0 + dt, trig.observable, self.cfg.event_tol, MAX_BISECTIONS, |t| {
            self.flow(&mut st, &flows, &snap, t - t0, &mut rk)?;
            let tr = self.triggered(&st, &watch).map_err(self.at_eval(t))?;
            Ok::<_, SimError>(Probe { crossed: tr.any(), settled: tr.observable })
        })?;
        Ok(Horizon::Hit(b.hi))
    }

    /// One grid step, split at the first event inside it.
    fn step_flow(&self, st: &mut SimState, trace: &mut Trace) -> SResult<()> {
        let next = ((st.grid + 1) as f64 * self.cfg.dt).min(self.cfg.t_end);
        let t0 = st.time;
        if next <= t0 {
            st.grid += 1;
            return Ok(());
        }
        let flows = self.active_flows(st)?;
        let watch = self.watch(st).map_err(self.at_eval(t0))?;
        let snap = self.snapshot(st, &flows);
        let mut rk = Rk4::new(flows.len());
        self.flow(st, &flows, &snap, next - t0, &mut rk)?;
        let trig = self.triggered(st, &watch).map_err(self.at_eval(next))?;
        if trig.any() {
            let b = bisect(t0, next, trig.observable, self.cfg.event_tol, MAX_BISECTIONS, |t| {
                self.flow(st, &flows, &snap, t - t0, &mut rk)?;
                let tr = self.triggered(st, &watch).map_err(self.at_eval(t))?;
                Ok::<_, SimError>(Probe { crossed: tr.any(), settled: tr.observable })
            })?;
            self.flow(st, &flows, &snap, b.hi - t0, &mut rk)?;
            let trig = self.triggered(st, &watch).map_err(self.at_eval(b.hi))?;
            st.time = b.hi;
            if b.hi >= next {
                st.grid += 1;
            }
            for c in trig.hits {
                st.hit[c] = true;
                let comp = &self.model.components[c];
                let mode = match st.active[c] {
                    Some(Endpoint::Mode(k)) => comp.modes[k].name.as_str(),
                    _ => "",
                };
                trace.events.push(Event {
                    time: st.time,
                    kind: EventKind::InvariantHit,
                    name: format!("{}.{}", comp.name, mode),
                    prefix: format!("system.{}", comp.name),
                    pre: vec![],
                    post: vec![],
                });
            }
        } else {
            st.time = next;
            st.grid += 1;
        }
        trace.samples.push(self.sample(st));
        Ok(())
    }

    // --- discrete behaviour ----------------------------------------------------

    pub fn members(&self, item: Item) -> Vec<(usize, usize)> {
        match item {
            Item::Solo { component, transition } => vec![(component, transition)],
            Item::Sync { group } => self.model.syncs[group].members.clone(),
        }
    }

    pub fn item_name(&self, item: Item) -> String {
        self.members(item)
            .iter()
            .map(|&(c, t)| format!("{}.{}", self.model.components[c].name, self.model.components[c].transitions[t].name))
            .collect::<Vec<_>>()
            .join("||")
    }

    fn candidate(&self, st: &SimState, c: usize, t: usize) -> Result<bool, EvalError> {
        let tr = &self.model.components[c].transitions[t];
        Ok(st.active[c] == Some(tr.source) && st.armed[c][t] == Arm::Armed && self.guard_true(&st.store, c, t)?)
    }

    fn run_action(&self, run: &mut Run<'_>, c: usize, t: usize) -> Result<(), SosError> {
        match &self.model.components[c].transitions[t].action {
            Action::Skip => Ok(()),
            Action::Assign { obj, mode, body, .. } => Sos::new(self.table, &self.strict).exec_discrete(run, body, *mode, Some(*obj)),
        }
    }

    /// Executes the actions of `members`. Several members run against the same
    /// pre-state and their writes are merged; two members writing one location
    /// conflict.
    fn execute(&self, store: &mut Store, members: &[(usize, usize)], time: f64, log: Option<&mut Vec<StepRecord>>) -> SResult<()> {
        let rt = |error| SimError::Runtime { error, time };
        let prefix = |c: usize, t: usize| {
            let comp = &self.model.components[c];
            Prefix::root("system").extend(comp.name.clone()).extend(comp.transitions[t].name.clone())
        };
        if let [(c, t)] = members {
            let mut run = Run::new(store, prefix(*c, *t));
            run.time = time;
            if log.is_some() {
                run = run.logging();
            }
            self.run_action(&mut run, *c, *t).map_err(rt)?;
            if let (Some(log), Some(mine)) = (log, run.log.take()) {
                log.extend(mine);
            }
            return Ok(());
        }
        let mut merged: Vec<(Loc, Value, usize)> = Vec::new();
        let mut records = Vec::new();
        for (i, &(c, t)) in members.iter().enumerate() {
            let mut scratch = store.clone();
            let mut run = Run::new(&mut scratch, prefix(c, t)).logging();
            run.time = time;
            self.run_action(&mut run, c, t).map_err(rt)?;
            let mine = run.log.take().unwrap_or_default();
            for w in mine.iter().flat_map(|r| &r.writes) {
                match merged.iter_mut().find(|(l, ..)| *l == w.loc) {
                    Some((_, _, owner)) if *owner != i => {
                        let span = self.model.components[c].transitions[t].span;
                        return Err(rt(SosError::WriteConflict { name: w.target.clone(), span }));
                    }
                    Some(entry) => entry.1 = w.new.clone(),
                    None => merged.push((w.loc, w.new.clone(), i)),
                }
            }
            records.extend(mine);
        }
        for (loc, v, _) in merged {
            store.init(loc, v);
        }
        if let Some(log) = log {
            log.extend(records);
        }
        Ok(())
    }

    fn targets_ok(&self, st: &SimState, members: &[(usize, usize)]) -> SResult<bool> {
        let mut scratch = st.store.clone();
        self.execute(&mut scratch, members, st.time, None)?;
        for &(c, t) in members {
            if let Endpoint::Mode(k) = self.model.components[c].transitions[t].target {
                if self.mode_margin(&scratch, c, k).map_err(self.at_eval(st.time))? < -self.cfg.value_tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Items enabled now: source active, armed, guard true and every target
    /// invariant true after the action. Synchronized groups come first.
    pub fn valid_compositions(&self, st: &SimState) -> SResult<Vec<Item>> {
        let err = self.at_eval(st.time);
        let mut items = Vec::new();
        for (g, group) in self.model.syncs.iter().enumerate() {
            let mut all = true;
            for &(c, t) in &group.members {
                all &= self.candidate(st, c, t).map_err(&err)?;
            }
            if all && self.targets_ok(st, &group.members)? {
                items.push(Item::Sync { group: g });
            }
        }
        for (c, comp) in self.model.components.iter().enumerate() {
            for t in 0..comp.transitions.len() {
                if self.model.sync_of(c, t).is_none() && self.candidate(st, c, t).map_err(&err)? && self.targets_ok(st, &[(c, t)])? {
                    items.push(Item::Solo { component: c, transition: t });
                }
            }
        }
        Ok(items)
    }

    fn rearm(&self, st: &mut SimState) -> SResult<()> {
        for c in 0..self.n() {
            if st.active[c].is_none() {
                continue;
            }
            for t in 0..st.armed[c].len() {
                if st.armed[c][t] != Arm::Armed && !self.guard_true(&st.store, c, t).map_err(self.at_eval(st.time))? {
                    st.armed[c][t] = Arm::Armed;
                }
            }
        }
        Ok(())
    }

    fn enter_subsystem(&self, st: &mut SimState, owner: usize) -> SResult<()> {
        let Some(sub) = &self.model.components[owner].subsystem else { return Ok(()) };
        for &c in &sub.components {
            st.active[c] = None;
        }
        let sos = Sos::new(self.table, &self.strict);
        let time = st.time;
        let mut run = Run::new(&mut st.store, Prefix::root("system").extend(format!("{}.{}", self.model.components[owner].name, sub.field)));
        run.time = time;
        if self.cfg.step_log {
            run = run.logging();
        }
        let starts = sos.run_init(&mut run, sub.obj).map_err(|error| SimError::Runtime { error, time })?;
        let records = run.log.take().unwrap_or_default();
        st.log.extend(records);
        for s in &starts {
            if let Some((c, k)) = self.model.locate_start(s) {
                st.active[c] = Some(Endpoint::Mode(k));
                st.waiting[c] = false;
                st.hit[c] = false;
                st.armed[c].iter_mut().for_each(|a| *a = Arm::Armed);
                st.store.init(self.model.components[c].tw, Value::Real(0.0));
            }
        }
        Ok(())
    }

    fn leave_subsystem(&self, st: &mut SimState, owner: usize) {
        if let Some(sub) = &self.model.components[owner].subsystem {
            for &c in &sub.components {
                st.active[c] = None;
                st.waiting[c] = false;
                st.hit[c] = false;
            }
        }
    }

    /// Fires an item: actions, mode switches, `tw` reset, jump accounting.
    pub fn apply(&self, st: &mut SimState, trace: &mut Trace, item: Item) -> SResult<()> {
        if st.time - st.instant > self.cfg.event_tol {
            st.instant = st.time;
            st.jumps_at_instant = 0;
        }
        st.jumps_at_instant += 1;
        if st.jumps_at_instant > self.cfg.max_jumps_per_instant {
            return Err(SimError::ZenoGuard { time: st.time, limit: self.cfg.max_jumps_per_instant });
        }
        let members = self.members(item);
        let pre = self.values(&st.store);
        let mut log = Vec::new();
        self.execute(&mut st.store, &members, st.time, self.cfg.step_log.then_some(&mut log))?;
        st.log.extend(log);
        for &(c, t) in &members {
            let tr = &self.model.components[c].transitions[t];
            if st.active[c] == Some(Endpoint::Subsystem) && tr.target != Endpoint::Subsystem {
                self.leave_subsystem(st, c);
            }
            st.active[c] = Some(tr.target);
            st.waiting[c] = false;
            st.hit[c] = false;
            st.armed[c][t] = Arm::Fired;
            st.store.init(self.model.components[c].tw, Value::Real(0.0));
            if tr.target == Endpoint::Subsystem {
                self.enter_subsystem(st, c)?;
            }
        }
        st.jumps += 1;
        let name = self.item_name(item);
        let prefix = name.split("||").map(|n| format!("system.{n}")).collect::<Vec<_>>().join("||");
        let kind = if matches!(item, Item::Sync { .. }) { EventKind::SyncJump } else { EventKind::Jump };
        trace.events.push(Event { time: st.time, kind, name, prefix, pre, post: self.values(&st.store) });
        Ok(())
    }

    /// Fires a lone item. Fails if it is not enabled.
    pub fn apply_jump(&self, st: &mut SimState, trace: &mut Trace, component: usize, transition: usize) -> SResult<bool> {
        let item = Item::Solo { component, transition };
        if !self.valid_compositions(st)?.contains(&item) {
            return Ok(false);
        }
        self.apply(st, trace, item).map(|_| true)
    }

    /// Fires a synchronized group if it is jointly enabled.
    pub fn apply_sync_jump(&self, st: &mut SimState, trace: &mut Trace, group: usize) -> SResult<bool> {
        let item = Item::Sync { group };
        if !self.valid_compositions(st)?.contains(&item) {
            return Ok(false);
        }
        self.apply(st, trace, item).map(|_| true)
    }

    /// Settles the current instant: re-arms guards, stops flows that reached
    /// their border with nothing enabled, and lists what is enabled.
    fn resolve_instant(&self, st: &mut SimState, trace: &mut Trace) -> SResult<Decision> {
        self.rearm(st)?;
        for c in 0..self.n() {
            if !st.hit[c] && !st.waiting[c] && self.leaving(st, c)? {
                st.hit[c] = true;
            }
            if st.hit[c] {
                for a in st.armed[c].iter_mut().filter(|a| **a == Arm::Declined) {
                    *a = Arm::Armed;
                }
            }
        }
        let items = self.valid_compositions(st)?;
        for c in 0..self.n() {
            if !st.hit[c] || st.waiting[c] {
                continue;
            }
            if items.iter().any(|i| self.members(*i).iter().any(|(m, _)| *m == c)) {
                continue;
            }
            st.hit[c] = false;
            st.waiting[c] = true;
            st.store.init(self.model.components[c].tw, Value::Real(0.0));
            let comp = &self.model.components[c];
            let mode = match st.active[c] {
                Some(Endpoint::Mode(k)) => comp.modes[k].name.clone(),
                _ => String::new(),
            };
            trace.events.push(Event {
                time: st.time,
                kind: EventKind::FlowStop,
                name: format!("{}.{}", comp.name, mode),
                prefix: format!("system.{}", comp.name),
                pre: vec![],
                post: vec![],
            });
        }
        let can_continue = !(0..self.n()).any(|c| st.hit[c] && !st.waiting[c]);
        Ok(Decision { items, can_continue })
    }

    /// A flow on its border whose next instant would leave the invariant.
    fn leaving(&self, st: &SimState, c: usize) -> SResult<bool> {
        let Some(Endpoint::Mode(k)) = st.active[c] else { return Ok(false) };
        if self.mode_margin(&st.store, c, k).map_err(self.at_eval(st.time))? > self.cfg.value_tol {
            return Ok(false);
        }
        Ok(match self.check_invariant_horizon(st, c, self.cfg.dt)? {
            Horizon::Hit(t) => t - st.time <= 2.0 * self.cfg.event_tol,
            Horizon::Ok => false,
        })
    }

    fn quiescent(&self, st: &SimState) -> bool {
        (0..self.n()).all(|c| st.active[c].is_none() || st.waiting[c])
    }

    /// Runs until the policy has to choose or the run ends.
    pub fn advance(&self, st: &mut SimState, trace: &mut Trace) -> SResult<Stop> {
        loop {
            if st.time >= self.cfg.t_end {
                return Ok(Stop::End(Termination::EndTime));
            }
            let d = self.resolve_instant(st, trace)?;
            if !d.items.is_empty() {
                return Ok(Stop::Decision(d));
            }
            if self.quiescent(st) {
                return Ok(Stop::End(Termination::Quiescent));
            }
            self.step_flow(st, trace)?;
        }
    }

    /// An item is urgent when it involves a component that cannot flow on.
    fn urgent(&self, st: &SimState, item: Item) -> bool {
        self.members(item).iter().any(|&(c, _)| st.hit[c] || st.waiting[c])
    }

    pub fn decide(&self, st: &SimState, d: &Decision, rng: &mut ChaCha8Rng) -> Choice {
        match self.cfg.policy {
            Policy::Eager | Policy::Explore { .. } => Choice::Jump(0),
            Policy::Lazy => match d.items.iter().position(|i| self.urgent(st, *i)) {
                Some(i) => Choice::Jump(i),
                None if d.can_continue => Choice::Continue,
                None => Choice::Jump(0),
            },
            Policy::Random { .. } => {
                let n = d.items.len() + usize::from(d.can_continue);
                match rng.gen_range(0..n) {
                    i if i < d.items.len() => Choice::Jump(i),
                    _ => Choice::Continue,
                }
            }
        }
    }

    pub fn commit(&self, st: &mut SimState, trace: &mut Trace, d: &Decision, choice: Choice) -> SResult<()> {
        match choice {
            Choice::Jump(i) => self.apply(st, trace, d.items[i]),
            Choice::Continue => {
                for item in &d.items {
                    for (c, t) in self.members(*item) {
                        st.armed[c][t] = Arm::Declined;
                    }
                }
                Ok(())
            }
        }
    }

    /// Runs to `t_end` or quiescence under the configured policy.
    pub fn simulate(&self) -> SResult<Outcome> {
        let mut st = self.initial_state()?;
        let mut trace = self.empty_trace();
        trace.samples.push(self.sample(&st));
        let seed = match self.cfg.policy {
            Policy::Random { seed } => seed,
            _ => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let term = loop {
            match self.advance(&mut st, &mut trace)? {
                Stop::End(t) => break t,
                Stop::Decision(d) => {
                    let choice = self.decide(&st, &d, &mut rng);
                    self.commit(&mut st, &mut trace, &d, choice)?;
                }
            }
        };
        trace.termination = Some(term);
        Ok(Outcome { trace, log: st.log })
    }
}

#[cfg(test)]
mod tests;
