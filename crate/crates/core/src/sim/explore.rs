//! Bounded enumeration of runs.
//!
//! Every instant with more than one option forks: each enabled item, plus
//! continuing the flow when that is allowed. Branches are expanded depth first
//! in option order, so the tree is a pure function of model and budgets.

use std::io::{self, Write};

use super::trace::{json_num, json_str, Termination, Trace};
use super::{Choice, Decision, SResult, SimState, Simulator, Stop};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub parent: Option<usize>,
    /// Item name, `continue`, or `root`.
    pub label: String,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub node: usize,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub leaves: Vec<Leaf>,
    /// Some branch was cut by a budget.
    pub truncated: bool,
}

impl Tree {
    pub fn children(&self, id: usize) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.parent == Some(id))
    }

    /// One `node` record per node, then one `leaf` record per leaf.
    pub fn write_jsonl(&self, out: &mut dyn Write) -> io::Result<()> {
        for n in &self.nodes {
            let parent = n.parent.map_or("null".to_string(), |p| p.to_string());
            writeln!(
                out,
                r#"{{"type":"node","id":{},"parent":{},"label":{},"time":{}}}"#,
                n.id,
                parent,
                json_str(&n.label),
                json_num(Some(n.time))
            )?;
        }
        for (i, l) in self.leaves.iter().enumerate() {
            let term = l.trace.termination.map_or("null".to_string(), |t| json_str(t.as_str()));
            writeln!(
                out,
                r#"{{"type":"leaf","leaf":{},"node":{},"termination":{},"events":{}}}"#,
                i,
                l.node,
                term,
                l.trace.events.len()
            )?;
        }
        writeln!(out, r#"{{"type":"end","branches":{},"truncated":{}}}"#, self.leaves.len(), self.truncated)
    }
}

struct Branch {
    node: usize,
    state: SimState,
    trace: Trace,
    jumps: usize,
    /// Choice to commit before advancing.
    pending: Option<(Decision, Choice)>,
}

/// Explores every run of `sim` up to `max_branches` leaves and `max_jumps`
/// jumps per path.
pub fn explore(sim: &Simulator<'_>, max_branches: usize, max_jumps: usize) -> SResult<Tree> {
    let mut tree = Tree::default();
    tree.nodes.push(Node { id: 0, parent: None, label: "root".into(), time: 0.0 });
    let state = sim.initial_state()?;
    let mut trace = sim.empty_trace();
    trace.samples.push(sim.sample(&state));
    let mut stack = vec![Branch { node: 0, state, trace, jumps: 0, pending: None }];
    let max_branches = max_branches.max(1);

    while let Some(mut b) = stack.pop() {
        if let Some((d, choice)) = b.pending.take() {
            if let Err(e) = commit(sim, &mut b, &d, choice, max_jumps) {
                match e {
                    Cut::Budget => {
                        tree.truncated = true;
                        finish(&mut tree, b, Termination::Truncated);
                        continue;
                    }
                    Cut::Error(e) => return Err(e),
                }
            }
        }
        let term = loop {
            let d = match sim.advance(&mut b.state, &mut b.trace)? {
                Stop::End(t) => break Some(t),
                Stop::Decision(d) => d,
            };
            let mut options: Vec<Choice> = (0..d.items.len()).map(Choice::Jump).collect();
            if d.can_continue {
                options.push(Choice::Continue);
            }
            if options.len() == 1 {
                match commit(sim, &mut b, &d, options[0], max_jumps) {
                    Ok(()) => continue,
                    Err(Cut::Budget) => {
                        tree.truncated = true;
                        break Some(Termination::Truncated);
                    }
                    Err(Cut::Error(e)) => return Err(e),
                }
            }
            let live = stack.len() + 1;
            let room = max_branches.saturating_sub(tree.leaves.len() + live) + 1;
            if options.len() > room {
                tree.truncated = true;
                options.truncate(room);
            }
            let mut children = Vec::new();
            for choice in options {
                let id = tree.nodes.len();
                let label = match choice {
                    Choice::Jump(i) => sim.item_name(d.items[i]),
                    Choice::Continue => "continue".into(),
                };
                tree.nodes.push(Node { id, parent: Some(b.node), label, time: b.state.time });
                children.push(Branch {
                    node: id,
                    state: b.state.clone(),
                    trace: b.trace.clone(),
                    jumps: b.jumps,
                    pending: Some((d.clone(), choice)),
                });
            }
            stack.extend(children.into_iter().rev());
            break None;
        };
        if let Some(term) = term {
            finish(&mut tree, b, term);
        }
    }
    Ok(tree)
}

enum Cut {
    Budget,
    Error(super::SimError),
}

fn commit(sim: &Simulator<'_>, b: &mut Branch, d: &Decision, choice: Choice, max_jumps: usize) -> Result<(), Cut> {
    if let Choice::Jump(_) = choice {
        if b.jumps >= max_jumps {
            return Err(Cut::Budget);
        }
        b.jumps += 1;
    }
    sim.commit(&mut b.state, &mut b.trace, d, choice).map_err(Cut::Error)
}

fn finish(tree: &mut Tree, mut b: Branch, term: Termination) {
    b.trace.termination = Some(term);
    tree.leaves.push(Leaf { node: b.node, trace: b.trace });
}
