//! Mission graph over automaton states and the online action selector.
//!
//! The automaton is first stripped of transitions that need two actions at
//! once, then given an auxiliary initial state. Graph nodes are states the
//! robot can "wait" in (a feasible self-loop); an edge `q -> q'` exists when
//! repeating a single symbol drives the automaton from `q` through states it
//! cannot wait in until `q'`'s self-loop catches it. Progress is measured by
//! the hop distance to the nearest node with an outgoing accepting edge.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::ltl::{ActionKind, Guard, Nba, Predicate, StateId, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymbolicError {
    #[error("the automaton already has an auxiliary initial state")]
    AlreadyAugmented,
    #[error("the automaton has no auxiliary initial state")]
    NotAugmented,
    #[error("no accepting structure survives pruning; the mission is unrealizable")]
    EmptyGraph,
    #[error("no edge from state {state} makes progress toward acceptance")]
    NoProgressEdge { state: StateId },
    #[error("every alternative has failed; the mission is unrealizable")]
    MissionUnrealizable,
    #[error("no action is pending")]
    NoPendingAction,
}

/// Manipulation commands. `Disassemble` only ever comes from the reactive
/// layer's fix mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SymbolicAction {
    Grasp { object: usize },
    Release { object: usize, region: usize },
    Disassemble { object: usize, target: [f64; 2] },
}

impl SymbolicAction {
    pub fn from_predicate(p: &Predicate) -> Self {
        match p.kind {
            ActionKind::Grasp => SymbolicAction::Grasp { object: p.object_index() },
            ActionKind::Release => {
                SymbolicAction::Release { object: p.object_index(), region: p.region_index().unwrap_or(0) }
            }
        }
    }

    pub fn disassemble(object: usize, target: Vec2) -> Self {
        SymbolicAction::Disassemble { object, target: [target.x, target.y] }
    }
}

/// Every symbol worth considering: the empty symbol and one singleton per
/// predicate. Larger symbols are physically infeasible.
fn feasible_symbols(nba: &Nba) -> Vec<Symbol> {
    std::iter::once(Symbol::empty()).chain(nba.alphabet().into_iter().map(Symbol::singleton)).collect()
}

/// Removes transitions that only symbols with two or more simultaneous
/// predicates can satisfy.
pub fn prune_nba(nba: &Nba) -> Nba {
    let syms = feasible_symbols(nba);
    let mut out = Nba::new(nba.num_states());
    for q in 0..nba.num_states() {
        for t in nba.transitions_from(q) {
            if syms.iter().any(|s| t.guard.holds(s)) {
                out.add_transition(q, t.guard.clone(), t.target);
            }
        }
    }
    out.initial = nba.initial.clone();
    out.finals = nba.finals.clone();
    out.aux = nba.aux;
    out
}

/// Adds a fresh sole initial state with a `true` self-loop and a transition
/// to every former initial state, guarded by what holds at time zero.
pub fn add_aux_state(nba: &Nba, pi0: &Symbol) -> Result<Nba, SymbolicError> {
    if nba.aux.is_some() {
        return Err(SymbolicError::AlreadyAugmented);
    }
    let mut out = nba.clone();
    let aux = out.add_state();
    out.add_transition(aux, Guard::True, aux);
    let guard = Guard::conjunction(pi0.iter().copied());
    for &q in &nba.initial {
        out.add_transition(aux, guard.clone(), q);
    }
    out.initial = BTreeSet::from([aux]);
    out.aux = Some(aux);
    Ok(out)
}

/// One way to traverse a graph edge: a repeated symbol and the automaton
/// run it induces, `q, q1, ..., qK` (the final self-loop at `qK` implied).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeOption {
    pub symbol: Symbol,
    pub run: Vec<StateId>,
    pub accepting: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AutomatonGraph {
    pub aux: StateId,
    pub nodes: BTreeSet<StateId>,
    /// Edge options per `(from, to)`, sorted by symbol.
    pub edges: BTreeMap<(StateId, StateId), Vec<EdgeOption>>,
    /// `d_F`; `None` stands for infinity.
    pub dist: BTreeMap<StateId, Option<u32>>,
}

impl AutomatonGraph {
    pub fn has_edge(&self, from: StateId, to: StateId) -> bool {
        self.edges.contains_key(&(from, to))
    }

    pub fn is_accepting_edge(&self, from: StateId, to: StateId) -> bool {
        self.edges.get(&(from, to)).is_some_and(|opts| opts.iter().any(|o| o.accepting))
    }

    pub fn accepting_edges(&self) -> BTreeSet<(StateId, StateId)> {
        self.edges.iter().filter(|(_, o)| o.iter().any(|o| o.accepting)).map(|(&e, _)| e).collect()
    }

    /// Nodes with an outgoing accepting edge.
    pub fn accepting_nodes(&self) -> BTreeSet<StateId> {
        self.accepting_edges().into_iter().map(|(q, _)| q).collect()
    }

    pub fn distance(&self, q: StateId) -> Option<u32> {
        self.dist.get(&q).copied().flatten()
    }

    pub fn out_edges(&self, q: StateId) -> impl Iterator<Item = (StateId, &Vec<EdgeOption>)> {
        self.edges.range((q, 0)..=(q, StateId::MAX)).map(|(&(_, to), o)| (to, o))
    }

    /// Human-readable dump: nodes with their distance, then edges with the
    /// symbol and run of every option.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "aux: {}", self.aux);
        for q in &self.nodes {
            let d = self.distance(*q).map_or("inf".to_string(), |d| d.to_string());
            let _ = writeln!(out, "node {q} d_F={d}");
        }
        for ((from, to), opts) in &self.edges {
            for o in opts {
                let run: Vec<String> = o.run.iter().map(|q| q.to_string()).collect();
                let _ = writeln!(
                    out,
                    "edge {from} -> {to} symbol={} run=[{}]{}",
                    o.symbol,
                    run.join(" "),
                    if o.accepting { " accepting" } else { "" }
                );
            }
        }
        out
    }
}

fn self_loop(nba: &Nba, q: StateId, sym: &Symbol) -> bool {
    nba.guard(q, q).is_some_and(|g| g.holds(sym))
}

/// Builds the mission graph from a pruned, augmented automaton.
pub fn build_graph(nba: &Nba) -> Result<AutomatonGraph, SymbolicError> {
    let aux = nba.aux.ok_or(SymbolicError::NotAugmented)?;
    let syms = feasible_symbols(nba);
    let bound = nba.num_states();

    // Reachability under feasible symbols.
    let mut reach = BTreeSet::from([aux]);
    let mut queue = VecDeque::from([aux]);
    while let Some(q) = queue.pop_front() {
        for t in nba.transitions_from(q) {
            if syms.iter().any(|s| t.guard.holds(s)) && reach.insert(t.target) {
                queue.push_back(t.target);
            }
        }
    }
    let nodes: BTreeSet<StateId> = reach.into_iter().filter(|&q| syms.iter().any(|s| self_loop(nba, q, s))).collect();

    let mut edges: BTreeMap<(StateId, StateId), BTreeMap<Symbol, EdgeOption>> = BTreeMap::new();
    let mut record = |from: StateId, to: StateId, opt: EdgeOption| {
        let slot = edges.entry((from, to)).or_default();
        match slot.get(&opt.symbol) {
            Some(old)
                if (old.accepting, std::cmp::Reverse(old.run.len()))
                    >= (opt.accepting, std::cmp::Reverse(opt.run.len())) => {}
            _ => {
                slot.insert(opt.symbol.clone(), opt);
            }
        }
    };

    for &q in &nodes {
        for sym in &syms {
            // Depth-first search over simple paths leaving q.
            let mut stack: Vec<(Vec<StateId>, usize)> = vec![(vec![q], 0)];
            while let Some((path, next_idx)) = stack.pop() {
                let last = *path.last().unwrap();
                let succ: Vec<StateId> = nba.successors(last, sym).collect();
                if next_idx >= succ.len() {
                    continue;
                }
                stack.push((path.clone(), next_idx + 1));
                let t = succ[next_idx];
                if path.len() == 1 && t == q {
                    continue;
                }
                if path.contains(&t) && t != q {
                    continue;
                }
                let mut run = path.clone();
                run.push(t);
                if self_loop(nba, t, sym) {
                    let accepting = run[1..].iter().any(|s| nba.is_final(*s));
                    record(q, t, EdgeOption { symbol: sym.clone(), run, accepting });
                } else if t != q && run.len() <= bound {
                    stack.push((run, 0));
                }
            }
            if nba.is_final(q) && self_loop(nba, q, sym) {
                record(q, q, EdgeOption { symbol: sym.clone(), run: vec![q, q], accepting: true });
            }
        }
    }

    let edges: BTreeMap<(StateId, StateId), Vec<EdgeOption>> =
        edges.into_iter().map(|(k, v)| (k, v.into_values().collect())).collect();

    let mut g = AutomatonGraph { aux, nodes, edges, dist: BTreeMap::new() };
    if g.accepting_edges().is_empty() {
        return Err(SymbolicError::EmptyGraph);
    }
    g.dist = distance_to_accepting(&g);
    Ok(g)
}

/// Hop distance from every node to the nearest node with an outgoing
/// accepting edge, by breadth-first search on reversed edges.
pub fn distance_to_accepting(g: &AutomatonGraph) -> BTreeMap<StateId, Option<u32>> {
    let mut dist: BTreeMap<StateId, Option<u32>> = g.nodes.iter().map(|&q| (q, None)).collect();
    let mut preds: BTreeMap<StateId, Vec<StateId>> = BTreeMap::new();
    for &(from, to) in g.edges.keys() {
        if from != to {
            preds.entry(to).or_default().push(from);
        }
    }
    let mut queue = VecDeque::new();
    for q in g.accepting_nodes() {
        dist.insert(q, Some(0));
        queue.push_back(q);
    }
    while let Some(q) = queue.pop_front() {
        let d = dist[&q].unwrap();
        for &p in preds.get(&q).map(Vec::as_slice).unwrap_or(&[]) {
            if dist[&p].is_none() {
                dist.insert(p, Some(d + 1));
                queue.push_back(p);
            }
        }
    }
    dist
}

/// Convenience: prune, augment with `pi0`, and build the graph.
pub fn mission_graph(nba: &Nba, pi0: &Symbol) -> Result<AutomatonGraph, SymbolicError> {
    build_graph(&add_aux_state(&prune_nba(nba), pi0)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    /// Nothing physical to do; report `Satisfied` right away.
    Idle,
    Act(Predicate),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub from: StateId,
    pub next: StateId,
    pub symbol: Symbol,
    pub accepting: bool,
    pub command: Command,
}

impl Step {
    pub fn action(&self) -> Option<SymbolicAction> {
        match &self.command {
            Command::Idle => None,
            Command::Act(p) => Some(SymbolicAction::from_predicate(p)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Satisfied,
    Infeasible,
}

/// Online progress through the mission graph.
#[derive(Debug, Clone)]
pub struct MissionState {
    current: StateId,
    pending: Option<Step>,
    failed: BTreeSet<(StateId, StateId, Symbol)>,
    history: Vec<(StateId, StateId)>,
}

impl MissionState {
    pub fn new(g: &AutomatonGraph) -> Self {
        Self { current: g.aux, pending: None, failed: BTreeSet::new(), history: Vec::new() }
    }

    pub fn current(&self) -> StateId {
        self.current
    }

    pub fn pending(&self) -> Option<&Step> {
        self.pending.as_ref()
    }

    /// Accepting edges traversed so far, in order.
    pub fn accepting_history(&self) -> &[(StateId, StateId)] {
        &self.history
    }

    fn candidates(&self, g: &AutomatonGraph) -> Vec<Step> {
        let q = self.current;
        let Some(d) = g.distance(q) else { return Vec::new() };
        let mut out = Vec::new();
        for (to, opts) in g.out_edges(q) {
            let eligible = if d == 0 { true } else { to != q && g.distance(to) == Some(d - 1) };
            if !eligible {
                continue;
            }
            for o in opts {
                if d == 0 && !o.accepting {
                    continue;
                }
                if self.failed.contains(&(q, to, o.symbol.clone())) {
                    continue;
                }
                let command = match o.symbol.only() {
                    Some(p) => Command::Act(p),
                    None => Command::Idle,
                };
                out.push(Step { from: q, next: to, symbol: o.symbol.clone(), accepting: o.accepting, command });
            }
        }
        out.sort_by(|a, b| (a.next, &a.symbol).cmp(&(b.next, &b.symbol)));
        out
    }

    /// Picks the next edge: an accepting one when already in the accepting
    /// set, otherwise one hop closer. Ties go to the lowest target id, then
    /// the smallest symbol.
    pub fn next_action(&mut self, g: &AutomatonGraph) -> Result<Step, SymbolicError> {
        let step =
            self.candidates(g).into_iter().next().ok_or(SymbolicError::NoProgressEdge { state: self.current })?;
        self.pending = Some(step.clone());
        Ok(step)
    }

    pub fn report_outcome(&mut self, g: &AutomatonGraph, outcome: Outcome) -> Result<(), SymbolicError> {
        let step = self.pending.take().ok_or(SymbolicError::NoPendingAction)?;
        match outcome {
            Outcome::Satisfied => {
                self.current = step.next;
                if step.accepting {
                    self.history.push((step.from, step.next));
                }
                Ok(())
            }
            Outcome::Infeasible => {
                self.failed.insert((step.from, step.next, step.symbol));
                if self.candidates(g).is_empty() {
                    Err(SymbolicError::MissionUnrealizable)
                } else {
                    Ok(())
                }
            }
        }
    }
}
