use apricot::analyzer::{check, flatten};
use apricot::eval::{Evaluator, Externals};
use apricot::parser::parse_source;
use apricot::sim::{explore, EventKind, Policy, SimConfig, Simulator, Trace};
use proptest::prelude::*;

const PLANT_ONLY: &str = include_str!("../models/bouncing_ball_plant_only.apr");
const TWO_GUARD: &str = include_str!("../models/two_guard.apr");
const G: f64 = 9.8;
const TOL: f64 = 1e-9;

fn ball_from(h0: f64, v0: f64) -> String {
    PLANT_ONLY.replace("Real h[] = {15, 10, 12};", &format!("Real h[] = {{{h0:?}, 10, 12}};")).replace(
        "Real v[] = {0, 1, 1.5};",
        &format!("Real v[] = {{{v0:?}, 1, 1.5}};"),
    )
}

fn run(src: &str, cfg: SimConfig) -> Trace {
    let x = Externals::new();
    let checked = check(&parse_source(src).unwrap(), &x).unwrap();
    let eval = Evaluator::new(x);
    let model = flatten(&checked, &eval, None).unwrap();
    Simulator::new(&model, &checked.table, &eval, cfg).unwrap().simulate().unwrap().trace
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ball_runs_are_sound(h0 in 1.0f64..12.0, v0 in -5.0f64..5.0) {
        let tr = run(&ball_from(h0, v0), SimConfig { t_end: 4.0, ..SimConfig::default() });
        let h = tr.column_index("ball.height").unwrap();
        let v = tr.column_index("ball.velocity").unwrap();
        let t = tr.column_index("clock.t").unwrap();
        for s in &tr.samples {
            let (hs, vs) = (s.values[h].unwrap(), s.values[v].unwrap());
            // trace soundness
            prop_assert!((-TOL..=15.0 + TOL).contains(&hs), "height {} at {}", hs, s.time);
            prop_assert!(vs.abs() <= 60.0);
            // clock fidelity
            prop_assert!((s.values[t].unwrap() - s.time).abs() <= 1e-9 * s.time.max(1.0));
        }
        let jumps: Vec<_> = tr.events_of(EventKind::Jump).collect();
        prop_assert!(!jumps.is_empty());
        for e in &jumps {
            // jump soundness: guard before, target invariant after
            prop_assert!(e.pre[h].unwrap().abs() <= TOL);
            prop_assert!(e.post[h].unwrap() >= -TOL && e.post[v].unwrap() >= 0.0);
            prop_assert!((e.post[v].unwrap() + 0.6 * e.pre[v].unwrap()).abs() < 1e-12);
        }
        // energy between events
        let cuts: Vec<f64> = jumps.iter().map(|e| e.time).collect();
        let mut prev: Option<(usize, f64)> = None;
        for s in tr.samples.iter().filter(|s| !cuts.iter().any(|c| (s.time - c).abs() < 1e-12)) {
            let phase = cuts.iter().filter(|&&c| c < s.time).count();
            let e = s.values[h].unwrap() + s.values[v].unwrap().powi(2) / (2.0 * G);
            match prev {
                Some((p, e0)) if p == phase => prop_assert!((e - e0).abs() < 1e-6),
                _ => prev = Some((phase, e)),
            }
        }
    }

    #[test]
    fn seeded_runs_and_trees_repeat(seed in any::<u64>()) {
        let cfg = SimConfig { t_end: 12.0, policy: Policy::Random { seed }, ..SimConfig::default() };
        prop_assert_eq!(run(TWO_GUARD, cfg.clone()), run(TWO_GUARD, cfg));
    }
}

#[test]
fn exploration_is_reproducible() {
    let x = Externals::new();
    let checked = check(&parse_source(TWO_GUARD).unwrap(), &x).unwrap();
    let eval = Evaluator::new(x);
    let model = flatten(&checked, &eval, None).unwrap();
    let sim = Simulator::new(&model, &checked.table, &eval, SimConfig { t_end: 12.0, ..SimConfig::default() }).unwrap();
    for (b, j) in [(8, 8), (2, 8), (8, 1), (3, 0)] {
        assert_eq!(explore(&sim, b, j).unwrap(), explore(&sim, b, j).unwrap());
    }
}
