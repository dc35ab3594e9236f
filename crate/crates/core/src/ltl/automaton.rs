use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;

use super::formula::{parse_formula, LtlFormula, Predicate, Symbol};
use super::{FormulaError, NbaFormatError};

pub type StateId = usize;

/// Positive Boolean combination of predicates, used as a transition guard.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Guard {
    True,
    Atom(Predicate),
    And(Vec<Guard>),
    Or(Vec<Guard>),
}

impl Guard {
    pub fn holds(&self, sym: &Symbol) -> bool {
        match self {
            Guard::True => true,
            Guard::Atom(p) => sym.contains(p),
            Guard::And(gs) => gs.iter().all(|g| g.holds(sym)),
            Guard::Or(gs) => gs.iter().any(|g| g.holds(sym)),
        }
    }

    pub fn conjunction(preds: impl IntoIterator<Item = Predicate>) -> Self {
        Guard::And(preds.into_iter().map(Guard::Atom).collect()).normalized()
    }

    pub fn predicates(&self) -> BTreeSet<Predicate> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<Predicate>) {
        match self {
            Guard::True => {}
            Guard::Atom(p) => {
                out.insert(*p);
            }
            Guard::And(gs) | Guard::Or(gs) => gs.iter().for_each(|g| g.collect(out)),
        }
    }

    /// Flattens nested connectives, drops neutral `true` operands, sorts and
    /// deduplicates operands.
    pub fn normalized(self) -> Self {
        match self {
            Guard::True | Guard::Atom(_) => self,
            Guard::And(gs) => {
                let mut flat = BTreeSet::new();
                for g in gs.into_iter().map(Guard::normalized) {
                    match g {
                        Guard::True => {}
                        Guard::And(inner) => flat.extend(inner),
                        other => {
                            flat.insert(other);
                        }
                    }
                }
                match flat.len() {
                    0 => Guard::True,
                    1 => flat.into_iter().next().unwrap(),
                    _ => Guard::And(flat.into_iter().collect()),
                }
            }
            Guard::Or(gs) => {
                let mut flat = BTreeSet::new();
                for g in gs.into_iter().map(Guard::normalized) {
                    match g {
                        Guard::True => return Guard::True,
                        Guard::Or(inner) => flat.extend(inner),
                        other => {
                            flat.insert(other);
                        }
                    }
                }
                if flat.len() == 1 {
                    flat.into_iter().next().unwrap()
                } else {
                    Guard::Or(flat.into_iter().collect())
                }
            }
        }
    }

    fn from_ltl(f: &LtlFormula) -> Option<Self> {
        Some(match f {
            LtlFormula::True => Guard::True,
            LtlFormula::Atom(p) => Guard::Atom(*p),
            LtlFormula::And(a, b) => Guard::And(vec![Self::from_ltl(a)?, Self::from_ltl(b)?]),
            LtlFormula::Or(a, b) => Guard::Or(vec![Self::from_ltl(a)?, Self::from_ltl(b)?]),
            _ => return None,
        })
    }

    /// Parses a guard written in the formula syntax without temporal operators.
    pub fn parse(text: &str) -> Result<Self, FormulaError> {
        let f = parse_formula(text)?;
        Self::from_ltl(&f)
            .map(Guard::normalized)
            .ok_or(FormulaError::Syntax { pos: 0, msg: "temporal operator in a guard".into() })
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::True => f.write_str("true"),
            Guard::Atom(p) => write!(f, "{p}"),
            Guard::And(gs) => {
                for (k, g) in gs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" & ")?;
                    }
                    if matches!(g, Guard::Or(_)) {
                        write!(f, "({g})")?;
                    } else {
                        write!(f, "{g}")?;
                    }
                }
                Ok(())
            }
            Guard::Or(gs) => {
                if gs.is_empty() {
                    // an empty disjunction never arises from normalization
                    return f.write_str("(false)");
                }
                for (k, g) in gs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" | ")?;
                    }
                    write!(f, "{g}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub guard: Guard,
    pub target: StateId,
}

/// Nondeterministic Büchi automaton with guarded transitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nba {
    pub(crate) transitions: Vec<Vec<Transition>>,
    pub(crate) initial: BTreeSet<StateId>,
    pub(crate) finals: BTreeSet<StateId>,
    pub(crate) aux: Option<StateId>,
}

impl Nba {
    pub fn new(num_states: usize) -> Self {
        Self { transitions: vec![Vec::new(); num_states], initial: BTreeSet::new(), finals: BTreeSet::new(), aux: None }
    }

    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn add_state(&mut self) -> StateId {
        self.transitions.push(Vec::new());
        self.transitions.len() - 1
    }

    pub fn set_initial(&mut self, q: StateId) {
        self.initial.insert(q);
    }

    pub fn set_final(&mut self, q: StateId) {
        self.finals.insert(q);
    }

    /// Adds a transition, or-merging the guard into an existing one between
    /// the same states.
    pub fn add_transition(&mut self, from: StateId, guard: Guard, to: StateId) {
        let out = &mut self.transitions[from];
        if let Some(t) = out.iter_mut().find(|t| t.target == to) {
            let old = std::mem::replace(&mut t.guard, Guard::True);
            t.guard = Guard::Or(vec![old, guard]).normalized();
        } else {
            out.push(Transition { guard: guard.normalized(), target: to });
            out.sort_by_key(|t| t.target);
        }
    }

    pub fn initial(&self) -> &BTreeSet<StateId> {
        &self.initial
    }

    pub fn finals(&self) -> &BTreeSet<StateId> {
        &self.finals
    }

    pub fn is_final(&self, q: StateId) -> bool {
        self.finals.contains(&q)
    }

    /// The auxiliary initial state, once the automaton has been augmented.
    pub fn aux_state(&self) -> Option<StateId> {
        self.aux
    }

    pub fn transitions_from(&self, q: StateId) -> &[Transition] {
        &self.transitions[q]
    }

    pub fn guard(&self, from: StateId, to: StateId) -> Option<&Guard> {
        self.transitions[from].iter().find(|t| t.target == to).map(|t| &t.guard)
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }

    /// Every predicate that appears in some guard.
    pub fn alphabet(&self) -> BTreeSet<Predicate> {
        self.transitions.iter().flatten().flat_map(|t| t.guard.predicates()).collect()
    }

    pub fn successors<'a>(&'a self, q: StateId, sym: &'a Symbol) -> impl Iterator<Item = StateId> + 'a {
        self.transitions[q].iter().filter(|t| t.guard.holds(sym)).map(|t| t.target)
    }

    /// Decides whether the lasso word `prefix · cycle^ω` is accepted.
    ///
    /// Works on the product of automaton states with word positions: the
    /// word is accepted iff some reachable product node in the cycle part
    /// with a final automaton state lies on a product cycle.
    ///
    /// # Panics
    /// If `cycle` is empty.
    pub fn accepts_lasso(&self, prefix: &[Symbol], cycle: &[Symbol]) -> bool {
        assert!(!cycle.is_empty(), "lasso cycle must be non-empty");
        let len = prefix.len() + cycle.len();
        let letter = |pos: usize| if pos < prefix.len() { &prefix[pos] } else { &cycle[pos - prefix.len()] };
        let next_pos = |pos: usize| if pos + 1 < len { pos + 1 } else { prefix.len() };
        let idx = |q: StateId, pos: usize| q * len + pos;
        let n = self.num_states() * len;

        let succ = |node: usize| -> Vec<usize> {
            let (q, pos) = (node / len, node % len);
            self.successors(q, letter(pos)).map(|t| idx(t, next_pos(pos))).collect()
        };

        let mut reached = vec![false; n];
        let mut queue: VecDeque<usize> = self.initial.iter().map(|&q| idx(q, 0)).collect();
        for &s in &queue {
            reached[s] = true;
        }
        while let Some(u) = queue.pop_front() {
            for v in succ(u) {
                if !reached[v] {
                    reached[v] = true;
                    queue.push_back(v);
                }
            }
        }

        for q in self.finals.iter().copied() {
            for pos in prefix.len()..len {
                let start = idx(q, pos);
                if !reached[start] {
                    continue;
                }
                let mut seen = vec![false; n];
                let mut stack = succ(start);
                while let Some(u) = stack.pop() {
                    if u == start {
                        return true;
                    }
                    if !seen[u] {
                        seen[u] = true;
                        stack.extend(succ(u));
                    }
                }
            }
        }
        false
    }

    /// Serializes to the line-oriented text format read by [`Nba::import`].
    ///
    /// States, transitions and guards are emitted in a canonical order, so
    /// `export(import(export(a))) == export(a)`.
    pub fn export(&self) -> String {
        let ids = |s: &BTreeSet<StateId>| s.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "states: {}", self.num_states());
        let _ = writeln!(out, "initial: {}", ids(&self.initial));
        let _ = writeln!(out, "final: {}", ids(&self.finals));
        if let Some(aux) = self.aux {
            let _ = writeln!(out, "aux: {aux}");
        }
        for (q, ts) in self.transitions.iter().enumerate() {
            for t in ts {
                let _ = writeln!(out, "trans: {q} {} {}", t.guard, t.target);
            }
        }
        out
    }

    /// Reads the text format:
    ///
    /// ```text
    /// # comment
    /// states: 2
    /// initial: 0
    /// final: 1
    /// trans: 0 true 0
    /// trans: 0 grasp(1) 1
    /// trans: 1 true 1
    /// ```
    pub fn import(text: &str) -> Result<Self, NbaFormatError> {
        let mut states: Option<usize> = None;
        let mut initial = Vec::new();
        let mut finals = Vec::new();
        let mut aux = None;
        let mut trans = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let malformed = |msg: &str| NbaFormatError::Malformed { line: line_no, msg: msg.to_string() };
            let (key, rest) = line.split_once(':').ok_or_else(|| malformed("expected `key: value`"))?;
            let rest = rest.trim();
            let parse_ids = |s: &str| -> Result<Vec<usize>, NbaFormatError> {
                s.split_whitespace().map(|t| t.parse::<usize>().map_err(|_| malformed("expected state ids"))).collect()
            };
            match key.trim() {
                "states" => {
                    if states.is_some() {
                        return Err(malformed("duplicate `states` line"));
                    }
                    states = Some(rest.parse().map_err(|_| malformed("expected a state count"))?);
                }
                "initial" => initial.extend(parse_ids(rest)?.into_iter().map(|q| (line_no, q))),
                "final" => finals.extend(parse_ids(rest)?.into_iter().map(|q| (line_no, q))),
                "aux" => {
                    let ids = parse_ids(rest)?;
                    if ids.len() != 1 {
                        return Err(malformed("expected a single aux state"));
                    }
                    aux = Some((line_no, ids[0]));
                }
                "trans" => {
                    let (src, tail) =
                        rest.split_once(char::is_whitespace).ok_or_else(|| malformed("expected `src guard dst`"))?;
                    let (guard, dst) = tail
                        .trim()
                        .rsplit_once(char::is_whitespace)
                        .ok_or_else(|| malformed("expected `src guard dst`"))?;
                    let src: usize = src.parse().map_err(|_| malformed("bad source state"))?;
                    let dst: usize = dst.parse().map_err(|_| malformed("bad target state"))?;
                    let guard = Guard::parse(guard).map_err(|e| match e {
                        FormulaError::UnknownPredicate { name, .. } => {
                            NbaFormatError::UnknownPredicate { line: line_no, name }
                        }
                        other => NbaFormatError::Malformed { line: line_no, msg: other.to_string() },
                    })?;
                    trans.push((line_no, src, guard, dst));
                }
                other => return Err(malformed(&format!("unknown key `{other}`"))),
            }
        }
        let n = states.ok_or(NbaFormatError::Malformed { line: 0, msg: "missing `states` line".into() })?;
        let check = |line: usize, q: usize| {
            if q < n {
                Ok(q)
            } else {
                Err(NbaFormatError::UndefinedState { line, state: q })
            }
        };
        let mut nba = Nba::new(n);
        for (line, q) in initial {
            nba.set_initial(check(line, q)?);
        }
        for (line, q) in finals {
            nba.set_final(check(line, q)?);
        }
        if let Some((line, q)) = aux {
            nba.aux = Some(check(line, q)?);
        }
        for (line, src, guard, dst) in trans {
            let src = check(line, src)?;
            let dst = check(line, dst)?;
            nba.add_transition(src, guard, dst);
        }
        Ok(nba)
    }

    /// Renumbers states by `perm` (old id → new id).
    pub fn relabeled(&self, perm: &[StateId]) -> Nba {
        let mut out = Nba::new(self.num_states());
        for (q, ts) in self.transitions.iter().enumerate() {
            for t in ts {
                out.add_transition(perm[q], t.guard.clone(), perm[t.target]);
            }
        }
        out.initial = self.initial.iter().map(|&q| perm[q]).collect();
        out.finals = self.finals.iter().map(|&q| perm[q]).collect();
        out.aux = self.aux.map(|q| perm[q]);
        out
    }

    /// States reachable from the initial states along any transition.
    pub fn reachable(&self) -> BTreeSet<StateId> {
        let mut seen: BTreeSet<StateId> = self.initial.clone();
        let mut queue: VecDeque<StateId> = self.initial.iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            for t in &self.transitions[q] {
                if seen.insert(t.target) {
                    queue.push_back(t.target);
                }
            }
        }
        seen
    }

    /// Transition count per (source, target) pair; used in tests and reports.
    pub fn edge_map(&self) -> BTreeMap<(StateId, StateId), &Guard> {
        let mut out = BTreeMap::new();
        for (q, ts) in self.transitions.iter().enumerate() {
            for t in ts {
                out.insert((q, t.target), &t.guard);
            }
        }
        out
    }
}
