//! Tableau translation from formulas to Büchi automata.
//!
//! Each automaton state is the set of obligations carried over to the next
//! position. A state is expanded into covers: the atoms that must hold now
//! plus the obligations for the next step. Postponing an eventuality (`F a`
//! or `a U b`) puts it back into the next-step set; the generalized
//! acceptance condition forbids postponing one forever. A counter over the
//! eventualities turns that into a single Büchi condition.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::automaton::{Guard, Nba, StateId};
use super::formula::{LtlFormula, Predicate};

type Obligations = BTreeSet<LtlFormula>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Cover {
    now: BTreeSet<Predicate>,
    next: Obligations,
}

fn expand(mut todo: Vec<LtlFormula>, mut done: Obligations, mut cover: Cover, out: &mut Vec<Cover>) {
    while let Some(f) = todo.pop() {
        if !done.insert(f.clone()) {
            continue;
        }
        match f {
            LtlFormula::True => {}
            LtlFormula::Atom(p) => {
                cover.now.insert(p);
            }
            LtlFormula::And(a, b) => {
                todo.push(*a);
                todo.push(*b);
            }
            LtlFormula::Always(ref a) => {
                todo.push((**a).clone());
                cover.next.insert(f.clone());
            }
            LtlFormula::Or(a, b) => {
                let mut left = todo.clone();
                left.push(*a);
                expand(left, done.clone(), cover.clone(), out);
                todo.push(*b);
            }
            LtlFormula::Eventually(ref a) => {
                let mut now = todo.clone();
                now.push((**a).clone());
                expand(now, done.clone(), cover.clone(), out);
                cover.next.insert(f.clone());
            }
            LtlFormula::Until(ref a, ref b) => {
                let mut now = todo.clone();
                now.push((**b).clone());
                expand(now, done.clone(), cover.clone(), out);
                todo.push((**a).clone());
                cover.next.insert(f.clone());
            }
        }
    }
    out.push(cover);
}

fn covers(state: &Obligations) -> Vec<Cover> {
    let mut out = Vec::new();
    expand(
        state.iter().rev().cloned().collect(),
        Obligations::new(),
        Cover { now: BTreeSet::new(), next: Obligations::new() },
        &mut out,
    );
    // A cover with fewer requirements now and fewer obligations later makes
    // any cover it is contained in redundant.
    out.sort();
    out.dedup();
    let keep: Vec<bool> = (0..out.len())
        .map(|i| {
            !(0..out.len()).any(|j| {
                j != i && out[j].now.is_subset(&out[i].now) && out[j].next.is_subset(&out[i].next) && (out[j] != out[i])
            })
        })
        .collect();
    out.into_iter().zip(keep).filter_map(|(c, k)| k.then_some(c)).collect()
}

fn eventualities(f: &LtlFormula, out: &mut BTreeSet<LtlFormula>) {
    match f {
        LtlFormula::True | LtlFormula::Atom(_) => {}
        LtlFormula::Eventually(a) => {
            out.insert(f.clone());
            eventualities(a, out);
        }
        LtlFormula::Until(a, b) => {
            out.insert(f.clone());
            eventualities(a, out);
            eventualities(b, out);
        }
        LtlFormula::Always(a) => eventualities(a, out),
        LtlFormula::And(a, b) | LtlFormula::Or(a, b) => {
            eventualities(a, out);
            eventualities(b, out);
        }
    }
}

/// Builds a Büchi automaton accepting exactly the words that satisfy `f`.
pub fn translate(f: &LtlFormula) -> Nba {
    let mut ev = BTreeSet::new();
    eventualities(f, &mut ev);
    let ev: Vec<LtlFormula> = ev.into_iter().collect();
    let n = ev.len();

    let mut ids: BTreeMap<(Obligations, usize), StateId> = BTreeMap::new();
    let mut queue = VecDeque::new();
    let mut nba = Nba::new(0);
    let start = (Obligations::from([f.clone()]), 0);
    ids.insert(start.clone(), nba.add_state());
    nba.set_initial(0);
    queue.push_back(start);

    let mut cover_cache: BTreeMap<Obligations, Vec<Cover>> = BTreeMap::new();
    while let Some((state, counter)) = queue.pop_front() {
        let src = ids[&(state.clone(), counter)];
        if counter == n {
            nba.set_final(src);
        }
        let cs = cover_cache.entry(state.clone()).or_insert_with(|| covers(&state)).clone();
        for cover in cs {
            let mut j = if counter == n { 0 } else { counter };
            while j < n && !cover.next.contains(&ev[j]) {
                j += 1;
            }
            let key = (cover.next.clone(), j);
            let dst = match ids.get(&key) {
                Some(&d) => d,
                None => {
                    let d = nba.add_state();
                    ids.insert(key.clone(), d);
                    queue.push_back(key);
                    d
                }
            };
            nba.add_transition(src, Guard::conjunction(cover.now.iter().copied()), dst);
        }
    }
    nba
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::formula::{parse_formula, Symbol};

    #[test]
    fn eventually_gives_two_states() {
        let f = parse_formula("F grasp(1)").unwrap();
        let a = translate(&f);
        assert_eq!(a.num_states(), 2);
        assert_eq!(a.initial().len(), 1);
        assert_eq!(a.finals().len(), 1);
        let q0 = *a.initial().iter().next().unwrap();
        let qf = *a.finals().iter().next().unwrap();
        assert_ne!(q0, qf);
        assert_eq!(a.guard(q0, q0), Some(&Guard::True));
        assert_eq!(a.guard(q0, qf), Some(&Guard::Atom(Predicate::grasp(1))));
        assert_eq!(a.guard(qf, qf), Some(&Guard::True));
    }

    #[test]
    fn safety_only_formula_has_all_final() {
        let f = parse_formula("G grasp(1)").unwrap();
        let a = translate(&f);
        assert_eq!(a.finals().len(), a.num_states());
        let g = Symbol::singleton(Predicate::grasp(1));
        assert!(a.accepts_lasso(&[], std::slice::from_ref(&g)));
        assert!(!a.accepts_lasso(&[g], &[Symbol::empty()]));
    }

    #[test]
    fn recurrence_needs_infinitely_many() {
        let f = parse_formula("G F grasp(1)").unwrap();
        let a = translate(&f);
        let g = Symbol::singleton(Predicate::grasp(1));
        assert!(a.accepts_lasso(&[], &[Symbol::empty(), g.clone()]));
        assert!(!a.accepts_lasso(&[g], &[Symbol::empty()]));
    }
}
