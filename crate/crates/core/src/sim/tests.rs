use super::*;
use crate::analyzer::{check, flatten, Checked};
use crate::eval::{ExternalFn, Externals};
use crate::parser::parse_source;

pub(crate) struct Built {
    pub checked: Checked,
    pub model: HybridModel,
    pub eval: Evaluator,
}

pub(crate) fn build(src: &str) -> Built {
    let mut x = Externals::new();
    x.insert(ExternalFn::parse("Resiliency/3=k*mass*abs(velocity)").unwrap());
    let checked = check(&parse_source(src).unwrap(), &x).expect("check");
    let eval = Evaluator::new(x);
    let model = flatten(&checked, &eval, None).expect("flatten");
    Built { checked, model, eval }
}

fn run(b: &Built, cfg: SimConfig) -> Result<Outcome, SimError> {
    Simulator::new(&b.model, &b.checked.table, &b.eval, cfg)?.simulate()
}

const PLANT_ONLY: &str = include_str!("../../models/bouncing_ball_plant_only.apr");

const TWO_GUARD: &str = include_str!("../../models/two_guard.apr");
const SYNC_SWAP: &str = include_str!("../../models/sync_swap.apr");
const SYNC_CONFLICT: &str = include_str!("../../models/sync_conflict.apr");
const FLOW_STOP: &str = include_str!("../../models/flow_stop.apr");
const ZENO: &str = include_str!("../../models/zeno.apr");
const DRAG: &str = include_str!("../../models/drag.apr");

const G: f64 = 9.8;
const K: f64 = 0.6;

/// Impact times from closed-form kinematics: fall from 15 m, then each
/// rebound leaves with k times the impact speed.
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

fn ball(t_end: f64) -> (Built, Outcome) {
    let b = build(PLANT_ONLY);
    let out = run(&b, SimConfig { t_end, ..SimConfig::default() }).unwrap();
    (b, out)
}

#[test]
fn ball_impacts_match_closed_form() {
    let (_, out) = ball(6.0);
    let t: Vec<f64> = out.trace.events_of(EventKind::Jump).map(|e| e.time).collect();
    let oracle = impact_oracle(4);
    assert_eq!(t.len(), 4, "{t:?}");
    for (a, b) in t.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
    assert_eq!(out.trace.termination, Some(Termination::EndTime));
}

#[test]
fn ball_peaks_and_bounds() {
    let (_, out) = ball(6.0);
    let tr = &out.trace;
    let h = tr.column_index("ball.height").unwrap();
    let v = tr.column_index("ball.velocity").unwrap();
    let t = impact_oracle(3);
    let peak = |a: f64, b: f64| {
        tr.samples.iter().filter(|s| s.time > a && s.time < b).map(|s| s.values[h].unwrap()).fold(f64::MIN, f64::max)
    };
    assert!((peak(t[0], t[1]) - 15.0 * K * K).abs() < 1e-4);
    assert!((peak(t[1], t[2]) - 15.0 * K.powi(4)).abs() < 1e-4);
    for s in &tr.samples {
        assert!(s.values[h].unwrap() >= -1e-9, "height {:?} at {}", s.values[h], s.time);
        assert!(s.values[v].unwrap().abs() <= 60.0);
    }
}

#[test]
fn flight_phases_conserve_energy() {
    let (_, out) = ball(6.0);
    let tr = &out.trace;
    let (h, v) = (tr.column_index("ball.height").unwrap(), tr.column_index("ball.velocity").unwrap());
    let jumps: Vec<f64> = tr.events_of(EventKind::Jump).map(|e| e.time).collect();
    let phase = |t: f64| jumps.iter().filter(|&&j| j < t).count();
    let mut first: Vec<Option<f64>> = vec![None; jumps.len() + 1];
    for s in &tr.samples {
        if jumps.iter().any(|j| (s.time - j).abs() < 1e-12) {
            continue;
        }
        let e = s.values[h].unwrap() + s.values[v].unwrap().powi(2) / (2.0 * G);
        let e0 = *first[phase(s.time)].get_or_insert(e);
        assert!((e - e0).abs() < 1e-6, "t={} drift {}", s.time, e - e0);
    }
}

#[test]
fn clock_tracks_time_exactly() {
    let (_, out) = ball(6.0);
    let c = out.trace.column_index("clock.t").unwrap();
    for s in &out.trace.samples {
        assert!((s.values[c].unwrap() - s.time).abs() <= 1e-9 * s.time.max(1.0));
    }
}

#[test]
fn free_fall_step() {
    let b = build(PLANT_ONLY);
    let sim = Simulator::new(&b.model, &b.checked.table, &b.eval, SimConfig::default()).unwrap();
    let mut st = sim.initial_state().unwrap();
    sim.integrate_step(&mut st, 0.5).unwrap();
    let vals = sim.values(&st.store);
    let col = |n: &str| vals[sim.column_names().iter().position(|c| c == n).unwrap()].unwrap();
    assert!((col("ball.height") - 13.775).abs() < 1e-12);
    assert!((col("ball.velocity") + 4.9).abs() < 1e-12);
    assert_eq!(st.time, 0.5);
}

#[test]
fn invariant_horizon() {
    let b = build(PLANT_ONLY);
    let sim = Simulator::new(&b.model, &b.checked.table, &b.eval, SimConfig::default()).unwrap();
    let st = sim.initial_state().unwrap();
    let ball = b.model.components.iter().position(|c| c.name == "ball").unwrap();
    assert_eq!(sim.check_invariant_horizon(&st, ball, 1.0).unwrap(), Horizon::Ok);
    match sim.check_invariant_horizon(&st, ball, 2.0).unwrap() {
        Horizon::Hit(t) => assert!((t - impact_oracle(1)[0]).abs() < 1e-8, "{t}"),
        Horizon::Ok => panic!("no hit"),
    }
}

#[test]
fn verbatim_ball_is_stopped_by_god() {
    let b = build(include_str!("../../models/bouncing_ball_corrected.apr"));
    let out = run(&b, SimConfig { t_end: 6.0, ..SimConfig::default() }).unwrap();
    let sync: Vec<f64> = out.trace.events_of(EventKind::SyncJump).map(|e| e.time).collect();
    assert_eq!(sync.len(), 1);
    assert!((sync[0] - impact_oracle(1)[0]).abs() < 1e-6);
    assert!(out.trace.events_of(EventKind::FlowStop).count() == 1);
    assert_eq!(out.trace.termination, Some(Termination::EndTime));
}

#[test]
fn sync_jump_uses_pre_state() {
    let b = build(SYNC_SWAP);
    let out = run(&b, SimConfig { t_end: 2.0, ..SimConfig::default() }).unwrap();
    let ev: Vec<&Event> = out.trace.events_of(EventKind::SyncJump).collect();
    assert_eq!(ev.len(), 1);
    assert!((ev[0].time - 1.0).abs() < 1e-9);
    assert_eq!(ev[0].name, "a.Take||b.Give");
    let ax = out.trace.column_index("a.x").unwrap();
    let ay = out.trace.column_index("a.y").unwrap();
    assert_eq!((ev[0].pre[ax], ev[0].pre[ay]), (Some(1.0), Some(2.0)));
    assert_eq!((ev[0].post[ax], ev[0].post[ay]), (Some(2.0), Some(1.0)));
}

#[test]
fn sync_overlap_is_a_conflict() {
    let b = build(SYNC_CONFLICT);
    let err = run(&b, SimConfig { t_end: 2.0, ..SimConfig::default() }).unwrap_err();
    assert_eq!(err.rule(), "WriteConflict");
}

#[test]
fn zeno_chain_is_bounded() {
    let b = build(ZENO);
    let err = run(&b, SimConfig { t_end: 1.0, ..SimConfig::default() }).unwrap_err();
    assert_eq!(err.rule(), "ZenoGuard");
    assert!(matches!(err, SimError::ZenoGuard { limit: 16, .. }));
}

#[test]
fn waiting_advances_tw_and_resumes() {
    let b = build(FLOW_STOP);
    let out = run(&b, SimConfig { t_end: 3.5, ..SimConfig::default() }).unwrap();
    let tr = &out.trace;
    let stop: Vec<f64> = tr.events_of(EventKind::FlowStop).map(|e| e.time).collect();
    assert_eq!(stop.len(), 1);
    assert!((stop[0] - 1.0).abs() < 1e-9);
    let tw = tr.column_index("tank.tw").unwrap();
    let x = tr.column_index("tank.x").unwrap();
    let tank = tr.components.iter().position(|c| c == "tank").unwrap();
    let mut seen = 0;
    for s in tr.samples.iter().filter(|s| s.time > 1.0 + 1e-9 && s.time < 3.0 - 1e-9) {
        assert_eq!(s.modes[tank], "filling:waiting");
        assert!((s.values[tw].unwrap() - (s.time - stop[0])).abs() < 1e-9);
        assert!((s.values[x].unwrap() - 1.0).abs() < 1e-9);
        seen += 1;
    }
    assert!(seen > 1000);
    let names: Vec<(String, f64)> = tr.events_of(EventKind::Jump).map(|e| (e.name.clone(), e.time)).collect();
    assert_eq!(names[0].0, "valve.Open");
    assert_eq!(names[1].0, "tank.Drain");
    assert!((names[1].1 - 3.0).abs() < 1e-9);
    let last = tr.samples.last().unwrap();
    assert_eq!(last.modes[tank], "filling");
    assert!((last.values[x].unwrap() - 0.5).abs() < 1e-9);
}

/// v' = -g - c v|v| from rest has v(t) = -sqrt(g/c) tanh(sqrt(g c) t).
fn drag_exact(t: f64) -> f64 {
    let c = 0.1;
    -(G / c).sqrt() * ((G * c).sqrt() * t).tanh()
}

fn drag_error(dt: f64) -> f64 {
    let b = build(DRAG);
    let out = run(&b, SimConfig { t_end: 1.0, dt, ..SimConfig::default() }).unwrap();
    let v = out.trace.column_index("body.v").unwrap();
    out.trace.samples.iter().map(|s| (s.values[v].unwrap() - drag_exact(s.time)).abs()).fold(0.0, f64::max)
}

#[test]
fn rk4_is_fourth_order() {
    let (e1, e2) = (drag_error(1e-2), drag_error(5e-3));
    assert!(e1 > 0.0 && e1 / e2 >= 8.0, "{e1} {e2} ratio {}", e1 / e2);
}

#[test]
fn eager_and_lazy_differ_on_optional_jumps() {
    let b = build(TWO_GUARD);
    let eager = run(&b, SimConfig { t_end: 12.0, ..SimConfig::default() }).unwrap();
    let e: Vec<(String, f64)> = eager.trace.events_of(EventKind::Jump).map(|e| (e.name.clone(), e.time)).collect();
    assert_eq!(e.len(), 1);
    assert_eq!(e[0].0, "p.GoLeft");
    assert!((e[0].1 - 1.0).abs() < 1e-9);
    let lazy = run(&b, SimConfig { t_end: 12.0, policy: Policy::Lazy, ..SimConfig::default() }).unwrap();
    let l: Vec<(String, f64)> = lazy.trace.events_of(EventKind::Jump).map(|e| (e.name.clone(), e.time)).collect();
    assert_eq!(l.len(), 1);
    assert_eq!(l[0].0, "p.GoLeft");
    assert!((l[0].1 - 10.0).abs() < 1e-9, "{l:?}");
}

#[test]
fn random_policy_is_seeded() {
    let b = build(TWO_GUARD);
    let go = |seed| run(&b, SimConfig { t_end: 12.0, policy: Policy::Random { seed }, ..SimConfig::default() }).unwrap();
    assert_eq!(go(7), go(7));
    let labels: std::collections::BTreeSet<String> =
        (0..20).map(|s| go(s).trace.events.iter().map(|e| format!("{}@{:.3}", e.name, e.time)).collect::<Vec<_>>().join(",")).collect();
    assert!(labels.len() > 1);
}

#[test]
fn explore_forks_at_two_guards() {
    let b = build(TWO_GUARD);
    let cfg = SimConfig { t_end: 12.0, policy: Policy::Explore { max_branches: 8, max_jumps: 8 }, ..SimConfig::default() };
    let sim = Simulator::new(&b.model, &b.checked.table, &b.eval, cfg).unwrap();
    let tree = explore(&sim, 8, 8).unwrap();
    let first: Vec<&str> = tree.children(0).map(|n| n.label.as_str()).collect();
    assert_eq!(first, ["p.GoLeft", "p.GoRight", "continue"]);
    assert!(!tree.truncated);
    assert_eq!(tree.leaves.len(), 4, "continue forks again at the border");
    assert_eq!(tree, explore(&sim, 8, 8).unwrap());

    assert!(explore(&sim, 1, 8).unwrap().truncated);
    let no_jumps = explore(&sim, 8, 0).unwrap();
    assert!(no_jumps.truncated);
    assert!(no_jumps.leaves.iter().any(|l| l.trace.termination == Some(Termination::Truncated)));
}

#[test]
fn explore_deterministic_model_has_one_leaf() {
    let b = build(PLANT_ONLY);
    let sim = Simulator::new(&b.model, &b.checked.table, &b.eval, SimConfig { t_end: 6.0, ..SimConfig::default() }).unwrap();
    let tree = explore(&sim, 8, 8).unwrap();
    assert_eq!(tree.leaves.len(), 1);
    assert_eq!(tree.nodes.len(), 1);
    assert_eq!(tree.leaves[0].trace.events_of(EventKind::Jump).count(), 4);
}

#[test]
fn step_log_records_jumps() {
    let b = build(PLANT_ONLY);
    let out = run(&b, SimConfig { t_end: 2.0, step_log: true, ..SimConfig::default() }).unwrap();
    let text: Vec<String> = out.log.iter().map(|r| r.to_string()).collect();
    assert!(text.iter().any(|l| l.contains("system.ball.CompMJ") && l.contains("assign-parallel")), "{text:#?}");
}

#[test]
fn zero_horizon_gives_one_sample() {
    let (_, out) = ball(0.0);
    assert_eq!(out.trace.samples.len(), 1);
    assert_eq!(out.trace.termination, Some(Termination::EndTime));
}

#[test]
fn bad_config_is_rejected() {
    let b = build(PLANT_ONLY);
    let r = Simulator::new(&b.model, &b.checked.table, &b.eval, SimConfig { dt: 0.0, ..SimConfig::default() });
    assert_eq!(r.err().unwrap().rule(), "Config");
}
