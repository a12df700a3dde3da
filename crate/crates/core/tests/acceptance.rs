//! One PASS/FAIL line per acceptance criterion, written past the test harness's capture.

use std::io::Write;
use std::time::{Duration, Instant};

use apricot::analyzer::{check, flatten, Checked, ClassTable, HybridModel};
use apricot::ast::{AssignMode, Decl, Member, MethodKind, Stmt};
use apricot::config::Prefix;
use apricot::eval::builtins::call;
use apricot::eval::{Evaluator, ExternalFn, Externals};
use apricot::parser::parse_source;
use apricot::sim::{explore, EventKind, Outcome, Policy, SimConfig, Simulator, Trace};
use apricot::sos::{Run, Sos};
use apricot::special::{erf, gamma};
use apricot::store::Store;
use apricot::types::SemType;
use apricot::value::Value;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const VERBATIM: &str = include_str!("../models/bouncing_ball.apr");
const PLANT_ONLY: &str = include_str!("../models/bouncing_ball_plant_only.apr");
const SYNC_SWAP: &str = include_str!("../models/sync_swap.apr");
const SYNC_CONFLICT: &str = include_str!("../models/sync_conflict.apr");
const TWO_GUARD: &str = include_str!("../models/two_guard.apr");
const FLOW_STOP: &str = include_str!("../models/flow_stop.apr");
const DRAG: &str = include_str!("../models/drag.apr");

const G: f64 = 9.8;
const K: f64 = 0.6;

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);
/// Target index, affine terms `(coefficient, variable)`, constant.
type Affine = (usize, Vec<(i32, usize)>, i32);

fn externals() -> Externals {
    let mut x = Externals::new();
    x.insert(ExternalFn::parse("Resiliency/3=k*mass*abs(velocity)").unwrap());
    x
}

fn rules(src: &str) -> Vec<String> {
    match parse_source(src) {
        Err(d) => d.into_iter().map(|d| d.rule).collect(),
        Ok(u) => match check(&u, &externals()) {
            Ok(_) => vec![],
            Err(d) => d.into_iter().map(|d| d.rule).collect(),
        },
    }
}

struct Built {
    checked: Checked,
    model: HybridModel,
    eval: Evaluator,
}

fn build(src: &str) -> Result<Built, String> {
    let x = externals();
    let unit = parse_source(src).map_err(|d| format!("{d:?}"))?;
    let checked = check(&unit, &x).map_err(|d| format!("{d:?}"))?;
    let eval = Evaluator::new(x);
    let model = flatten(&checked, &eval, None).map_err(|e| e.to_string())?;
    Ok(Built { checked, model, eval })
}

fn simulate(b: &Built, cfg: SimConfig) -> Result<Outcome, String> {
    Simulator::new(&b.model, &b.checked.table, &b.eval, cfg).and_then(|s| s.simulate()).map_err(|e| format!("{}: {e}", e.rule()))
}

fn col(tr: &Trace, name: &str) -> Result<usize, String> {
    tr.column_index(name).ok_or_else(|| format!("no column {name}"))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

// 1 -------------------------------------------------------------------------

fn mutations() -> Vec<(&'static str, String)> {
    let b = VERBATIM;
    vec![
        ("interface.system.init", b.replace(" Init(){\n       height=h[1],velocity=v[1],t=0;\n       god.idle.start();\n       ball.moving.start();\n }\n", "")),
        ("interface.dynamic.invariant", b.replace("  Invariant{\n        height in [0,15];\n        velocity in [-60,60];\n  };\n", "")),
        ("interface.assignment.discrete", b.replace("  Discrete(){\n        velocity = -coefficient * velocity;\n        height = height;\n  }\n", "")),
        ("cardinality.controllers", b.replace(" Controller god=new God(mass,height,velocity,k,t,g);\n", "")),
        ("constraint.clock", b.replace("dot(t,1)==1;", "dot(t,1)==2;")),
        ("interval.invalid", b.replace("height in [0,15];", "height in (0,15];")),
        ("class.nested", b.replace("  Real height,velocity,k,g;\n", "  Real height,velocity,k,g;\n  Plant Inner{}\n")),
        ("block.misplaced", b.replace("        dot(velocity,1) == -acceleration;\n   }\n", "        dot(velocity,1) == -acceleration;\n   }\n  Condition{ height == 0; };\n")),
        ("cardinality.compositions", b.replace("      CompMJ(moving,jump,moving){\n          Condition{  moving.height==0; };\n      };\n", "")),
        ("cardinality.plants", b.replace(" Plant ball = new Ball(height,velocity,k,g);\n", "")),
        ("init.duplicate_start", b.replace("       ball.moving.start();\n", "       ball.moving.start();\n       ball.moving.start();\n")),
        ("type.constant_reassignment", b.replace("t=0;", "t=0;\n       g = 1;")),
    ]
}

fn corpus_and_mutations() -> Verdict {
    let start = Instant::now();
    let base = rules(VERBATIM);
    ensure(base.is_empty(), || format!("verbatim model reports {base:?}"))?;
    let cases = mutations();
    for (want, src) in &cases {
        ensure(src != VERBATIM, || format!("mutation for {want} did not apply"))?;
        let got = rules(src);
        ensure(got.iter().any(|r| r == want), || format!("{want}: got {got:?}"))?;
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!("verbatim model clean, {} mutations rejected", cases.len()))
}

// 2 -------------------------------------------------------------------------

fn discrete_body(src: &str) -> Vec<Stmt> {
    let unit = parse_source(src).unwrap();
    let Decl::Class(c) = &unit.decls[0] else { panic!("not a class") };
    c.members
        .iter()
        .find_map(|m| match m {
            Member::Method(m) if m.kind == MethodKind::Discrete => Some(m.body.clone()),
            _ => None,
        })
        .unwrap()
}

fn exec(body: &[Stmt], mode: AssignMode, init: &[(&str, f64)]) -> Result<Vec<f64>, String> {
    let table = ClassTable::default();
    let eval = Evaluator::default();
    let sos = Sos::new(&table, &eval);
    let mut store = Store::new();
    let obj = store.new_object("T");
    for (n, v) in init {
        let l = store.fresh_with(Value::Real(*v), SemType::REAL);
        store.add_field(obj, n, l);
    }
    let mut run = Run::new(&mut store, Prefix::root("system"));
    sos.exec_discrete(&mut run, body, mode, Some(obj)).map_err(|e| e.to_string())?;
    init.iter()
        .map(|(n, _)| match store.read(store.field(obj, n).unwrap()) {
            Value::Real(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            v => Err(format!("{n} = {v}")),
        })
        .collect()
}

fn body_text(stmts: &[Affine]) -> String {
    let mut s = String::from("ParallelAssignment T{ Real v0,v1,v2,v3,v4,v5; Discrete(){ ");
    for (target, terms, c) in stmts {
        s += &format!("v{target} = {c}");
        for (k, v) in terms {
            s += &format!(" + {k} * v{v}");
        }
        s += "; ";
    }
    s + "} }"
}

fn discrete_laws() -> Verdict {
    let start = Instant::now();
    let init = [("x", 0.0), ("y", 1.0)];
    let seq = exec(&discrete_body("SequentialAssignment T{ Real x,y; Discrete(){ x = y; y = x; } }"), AssignMode::Sequential, &init)?;
    let par = exec(&discrete_body("ParallelAssignment T{ Real x,y; Discrete(){ x = y; y = x; } }"), AssignMode::Parallel, &init)?;
    ensure(seq == [1.0, 1.0], || format!("sequential gave {seq:?}"))?;
    ensure(par == [1.0, 0.0], || format!("parallel gave {par:?}"))?;

    // Distinct targets, random affine right-hand sides, random order.
    let stmt = (prop::collection::vec((-3i32..4, 0usize..6), 0..3), -5i32..6);
    let strategy = (prop::sample::subsequence((0..6usize).collect::<Vec<_>>(), 1..=6), prop::collection::vec(stmt, 6))
        .prop_flat_map(|(targets, rhs)| {
            let stmts: Vec<_> = targets.iter().zip(rhs).map(|(t, (terms, c))| (*t, terms, c)).collect();
            (Just(stmts.clone()), Just(stmts).prop_shuffle())
        });
    let vars: Vec<(String, f64)> = (0..6).map(|i| (format!("v{i}"), i as f64 * 1.5 - 2.0)).collect();
    let init: Vec<(&str, f64)> = vars.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    let mut runner = TestRunner::new(Config { cases: 200, failure_persistence: None, ..Config::default() });
    runner
        .run(&strategy, |(a, b)| {
            let ra = exec(&discrete_body(&body_text(&a)), AssignMode::Parallel, &init).map_err(TestCaseError::fail)?;
            let rb = exec(&discrete_body(&body_text(&b)), AssignMode::Parallel, &init).map_err(TestCaseError::fail)?;
            prop_assert_eq!(ra, rb);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within(Duration::from_secs(5), start)?;
    Ok("swap example exact, 200 permuted parallel bodies agree".into())
}

// 3 -------------------------------------------------------------------------

fn int(name: &str, args: &[i64]) -> Result<i64, String> {
    let v: Vec<Value> = args.iter().map(|a| Value::Integer(*a)).collect();
    match call(name, &v).map_err(|e| format!("{name}{args:?}: {e:?}"))? {
        Value::Integer(i) => Ok(i),
        other => Err(format!("{name}{args:?} = {other}")),
    }
}

fn math_library() -> Verdict {
    let start = Instant::now();
    for (f, x, want) in [("round", 2.5, 3), ("round", 0.4, 0), ("floor", 2.5, 2), ("ceil", 2.5, 3)] {
        let got = call(f, &[Value::Real(x)]).map_err(|e| format!("{e:?}"))?;
        ensure(got == Value::Integer(want), || format!("{f}({x}) = {got}"))?;
    }
    for x in -9i64..=9 {
        for y in (-9i64..=9).filter(|&y| y != 0) {
            let (d, r) = (int("div", &[x, y])?, int("rem", &[x, y])?);
            let (f, m) = (int("fld", &[x, y])?, int("mod", &[x, y])?);
            ensure(d * y + r == x && f * y + m == x, || format!("identity fails at ({x},{y})"))?;
            ensure(m == 0 || m.signum() == y.signum(), || format!("mod sign at ({x},{y})"))?;
            ensure(r == 0 || r.signum() == x.signum(), || format!("rem sign at ({x},{y})"))?;
        }
    }
    for a in 1i64..=30 {
        for b in 1i64..=30 {
            ensure(int("gcd", &[a, b])? * int("lcm", &[a, b])? == a * b, || format!("gcd*lcm at ({a},{b})"))?;
        }
    }
    let e3 = erf(3.0f64);
    ensure((e3 - 0.9999779095).abs() < 1e-6, || format!("erf(3) = {e3}"))?;
    let mut fact = 1.0f64;
    for n in 1..=10u32 {
        if n > 1 {
            fact *= (n - 1) as f64;
        }
        let g = gamma(n as f64).ok_or("gamma undefined")?;
        ensure(((g - fact) / fact).abs() < 1e-9, || format!("gamma({n}) = {g}"))?;
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!("erf(3)={e3:.10}"))
}

// 4, 5 ----------------------------------------------------------------------

fn impact_oracle(n: usize) -> Vec<f64> {
    let mut t = (2.0 * 15.0 / G).sqrt();
    let mut v = G * t;
    let mut out = vec![t];
    while out.len() < n {
        v *= K;
        t += 2.0 * v / G;
        out.push(t);
    }
    out
}

fn ball_trace() -> Result<Trace, String> {
    let b = build(PLANT_ONLY)?;
    Ok(simulate(&b, SimConfig { t_end: 6.0, dt: 1e-3, event_tol: 1e-9, policy: Policy::Eager, ..SimConfig::default() })?.trace)
}

fn ball_dynamics(tr: &Trace, start: Instant) -> Verdict {
    let (h, v) = (col(tr, "ball.height")?, col(tr, "ball.velocity")?);
    let impacts: Vec<f64> = tr.events_of(EventKind::Jump).map(|e| e.time).collect();
    ensure(impacts.len() >= 3, || format!("impacts {impacts:?}"))?;
    for (want, got) in [1.74964, 3.84921, 5.10895].iter().zip(&impacts) {
        ensure((want - got).abs() < 1e-4, || format!("impact {got} vs {want}"))?;
    }
    for (want, got) in impact_oracle(3).iter().zip(&impacts) {
        ensure((want - got).abs() < 1e-6, || format!("impact {got} vs closed form {want}"))?;
    }
    let peak = |a: f64, b: f64| tr.samples.iter().filter(|s| s.time > a && s.time < b).filter_map(|s| s.values[h]).fold(f64::MIN, f64::max);
    for (i, want) in [15.0 * K * K, 15.0 * K.powi(4)].into_iter().enumerate() {
        let got = peak(impacts[i], impacts[i + 1]);
        ensure((got - want).abs() < 1e-4, || format!("peak {got} vs {want}"))?;
    }
    for s in &tr.samples {
        let (hv, vv) = (s.values[h].ok_or("null height")?, s.values[v].ok_or("null velocity")?);
        ensure(hv >= -1e-9, || format!("height {hv} at t={}", s.time))?;
        ensure((-60.0..=60.0).contains(&vv), || format!("velocity {vv} at t={}", s.time))?;
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("impacts {:.6} {:.6} {:.6}, peaks {:.6} {:.6}", impacts[0], impacts[1], impacts[2], peak(impacts[0], impacts[1]), peak(impacts[1], impacts[2])))
}

fn flight_energy(tr: &Trace) -> Verdict {
    let (h, v) = (col(tr, "ball.height")?, col(tr, "ball.velocity")?);
    let jumps: Vec<f64> = tr.events_of(EventKind::Jump).map(|e| e.time).collect();
    let mut worst = 0.0f64;
    let mut prev: Option<(usize, f64)> = None;
    for s in &tr.samples {
        if jumps.iter().any(|j| (s.time - j).abs() < 1e-12) {
            prev = None;
            continue;
        }
        let phase = jumps.iter().filter(|&&j| j < s.time).count();
        let e = s.values[h].ok_or("null")? + s.values[v].ok_or("null")?.powi(2) / (2.0 * G);
        match prev {
            Some((p, e0)) if p == phase => worst = worst.max((e - e0).abs()),
            _ => prev = Some((phase, e)),
        }
    }
    ensure(worst < 1e-6, || format!("energy drift {worst:e}"))?;
    Ok(format!("max drift {worst:.2e}"))
}

// 6 -------------------------------------------------------------------------

/// Closed form of v' = -g - c v|v| from rest.
fn drag_exact(t: f64) -> f64 {
    -(G / 0.1f64).sqrt() * ((G * 0.1f64).sqrt() * t).tanh()
}

fn drag_error(b: &Built, dt: f64) -> Result<f64, String> {
    let tr = simulate(b, SimConfig { t_end: 1.0, dt, ..SimConfig::default() })?.trace;
    let v = col(&tr, "body.v")?;
    Ok(tr.samples.iter().filter_map(|s| s.values[v].map(|x| (x - drag_exact(s.time)).abs())).fold(0.0, f64::max))
}

fn integration_order() -> Verdict {
    let b = build(DRAG)?;
    let (e1, e2) = (drag_error(&b, 1e-2)?, drag_error(&b, 5e-3)?);
    let ratio = e1 / e2;
    ensure(ratio >= 8.0, || format!("errors {e1:e} {e2:e}, ratio {ratio}"))?;
    Ok(format!("errors {e1:.3e} -> {e2:.3e}, ratio {ratio:.2}"))
}

// 7 -------------------------------------------------------------------------

fn synchronized_jumps() -> Verdict {
    let b = build(SYNC_SWAP)?;
    let tr = simulate(&b, SimConfig { t_end: 2.0, ..SimConfig::default() })?.trace;
    let ev: Vec<_> = tr.events_of(EventKind::SyncJump).collect();
    ensure(ev.len() == 1, || format!("{} sync jumps", ev.len()))?;
    let (x, y) = (col(&tr, "a.x")?, col(&tr, "a.y")?);
    let e = ev[0];
    ensure((e.time - 1.0).abs() < 1e-9, || format!("sync at {}", e.time))?;
    ensure(e.pre[x] == Some(1.0) && e.pre[y] == Some(2.0), || format!("pre {:?}", e.pre))?;
    ensure(e.post[x] == Some(2.0) && e.post[y] == Some(1.0), || format!("post {:?}", e.post))?;
    let c = build(SYNC_CONFLICT)?;
    match simulate(&c, SimConfig { t_end: 2.0, ..SimConfig::default() }) {
        Err(e) if e.starts_with("WriteConflict") => {}
        other => return Err(format!("overlap gave {other:?}")),
    }
    Ok(format!("{} at t={}, (1,2) -> (2,1); overlap is WriteConflict", e.name, e.time))
}

// 8 -------------------------------------------------------------------------

fn nondeterminism() -> Verdict {
    let b = build(TWO_GUARD)?;
    let sim = Simulator::new(&b.model, &b.checked.table, &b.eval, SimConfig { t_end: 12.0, ..SimConfig::default() }).map_err(|e| e.to_string())?;
    let tree = explore(&sim, 8, 8).map_err(|e| e.to_string())?;
    let first: Vec<&str> = tree.children(0).map(|n| n.label.as_str()).collect();
    ensure(first.len() == 3, || format!("first level {first:?}"))?;
    let bytes = || -> Result<Vec<u8>, String> {
        let out = simulate(&b, SimConfig { t_end: 12.0, policy: Policy::Random { seed: 7 }, ..SimConfig::default() })?;
        let (mut samples, mut events) = (Vec::new(), Vec::new());
        out.trace.write_csv(&mut samples, &mut events).map_err(|e| e.to_string())?;
        samples.extend(events);
        Ok(samples)
    };
    ensure(bytes()? == bytes()?, || "seeded runs differ".into())?;
    Ok(format!("first level {first:?}; seed 7 reproducible"))
}

// 9 -------------------------------------------------------------------------

fn flow_termination() -> Verdict {
    let b = build(FLOW_STOP)?;
    let tr = simulate(&b, SimConfig { t_end: 4.0, ..SimConfig::default() })?.trace;
    let stop: Vec<f64> = tr.events_of(EventKind::FlowStop).map(|e| e.time).collect();
    ensure(stop.len() == 1, || format!("flow stops {stop:?}"))?;
    let (tw, x) = (col(&tr, "tank.tw")?, col(&tr, "tank.x")?);
    let resume = tr.events_of(EventKind::Jump).find(|e| e.name == "tank.Drain").map(|e| e.time).ok_or("never resumed")?;
    let mut worst = 0.0f64;
    for s in tr.samples.iter().filter(|s| s.time > stop[0] && s.time < resume) {
        worst = worst.max((s.values[tw].ok_or("null tw")? - (s.time - stop[0])).abs());
    }
    ensure(worst <= 1e-9, || format!("tw error {worst:e}"))?;
    let last = tr.samples.last().ok_or("empty trace")?;
    ensure((last.values[x].ok_or("null")? - 1.0).abs() < 1e-9 && last.time == 4.0, || format!("final x {:?}", last.values[x]))?;
    Ok(format!("stop at t={}, tw error {worst:.1e}, resumed at t={resume}", stop[0]))
}

// 10 ------------------------------------------------------------------------

fn clock_constraint() -> Verdict {
    for (what, src) in [("rhs 2", PLANT_ONLY.replace("dot(t,1)==1;", "dot(t,1)==2;")), ("order 2", PLANT_ONLY.replace("dot(t,1)==1;", "dot(t,2)==1;"))] {
        let got = rules(&src);
        ensure(got.iter().any(|r| r == "constraint.clock"), || format!("{what}: {got:?}"))?;
    }
    let tr = ball_trace()?;
    let t = col(&tr, "clock.t")?;
    let mut worst = 0.0f64;
    for s in tr.samples.iter().filter(|s| s.time > 0.0) {
        worst = worst.max((s.values[t].ok_or("null")? - s.time).abs() / s.time);
    }
    ensure(worst <= 1e-9, || format!("relative clock error {worst:e}"))?;
    Ok(format!("both violations rejected, relative clock error {worst:.1e}"))
}

fn report(line: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

#[test]
fn acceptance() {
    let ball_start = Instant::now();
    let ball = ball_trace();
    let criteria: Vec<Criterion> = vec![
        ("corpus parse/check and mutations", Box::new(corpus_and_mutations)),
        ("discrete-semantics laws", Box::new(discrete_laws)),
        ("math library", Box::new(math_library)),
        ("bouncing-ball dynamics", Box::new(|| ball_dynamics(ball.as_ref().map_err(Clone::clone)?, ball_start))),
        ("flight-phase conservation", Box::new(|| flight_energy(ball.as_ref().map_err(Clone::clone)?))),
        ("integration order", Box::new(integration_order)),
        ("synchronized jumps", Box::new(synchronized_jumps)),
        ("nondeterminism", Box::new(nondeterminism)),
        ("flow termination", Box::new(flow_termination)),
        ("clock constraint", Box::new(clock_constraint)),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => report(format!("PASS {:>2} {name}: {detail}", i + 1)),
            Err(why) => {
                report(format!("FAIL {:>2} {name}: {why}", i + 1));
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria {failed:?}");
}
