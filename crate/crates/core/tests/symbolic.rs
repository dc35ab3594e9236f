mod common;

use std::collections::BTreeMap;

use infotamp::ltl::{formula_to_nba, translate, Nba, Symbol};
use infotamp::symbolic::{mission_graph, AutomatonGraph, Command, MissionState, Outcome, SymbolicError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn reference_patrol_distances() {
    let g = mission_graph(&Nba::import(common::PATROL_NBA).unwrap(), &Symbol::empty()).unwrap();
    let d: Vec<Option<u32>> = [g.aux, 0, 1].iter().map(|&q| g.distance(q)).collect();
    assert_eq!(d, vec![Some(2), Some(1), Some(0)]);
}

#[test]
fn translated_patrol_formula_matches_reference_automaton() {
    let ours = formula_to_nba("G F grasp(1) & G F grasp(2)").unwrap();
    let reference = Nba::import(common::PATROL_NBA).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let preds = [infotamp::ltl::Predicate::grasp(1), infotamp::ltl::Predicate::grasp(2)];
    for _ in 0..300 {
        let (p, c) = common::random_lasso(&mut rng, &preds);
        assert_eq!(ours.accepts_lasso(&p, &c), reference.accepts_lasso(&p, &c));
    }
    let g = mission_graph(&ours, &Symbol::empty()).unwrap();
    assert_eq!(g.distance(g.aux), Some(1), "{}", g.describe());
}

fn shape(g: &AutomatonGraph, perm: &[usize]) -> BTreeMap<(usize, usize), Vec<(String, bool)>> {
    let map = |q: usize| if q == g.aux { usize::MAX } else { perm[q] };
    g.edges
        .iter()
        .map(|((a, b), opts)| {
            let mut o: Vec<(String, bool)> = opts.iter().map(|o| (o.symbol.to_string(), o.accepting)).collect();
            o.sort();
            ((map(*a), map(*b)), o)
        })
        .collect()
}

#[test]
fn graph_is_invariant_under_state_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for (f, _, _) in common::corpus(0x33, 80, 1) {
        let nba = translate(&f);
        let Ok(g) = mission_graph(&nba, &Symbol::empty()) else { continue };
        let mut perm: Vec<usize> = (0..nba.num_states()).collect();
        perm.shuffle(&mut rng);
        let h = mission_graph(&nba.relabeled(&perm), &Symbol::empty()).unwrap();
        let identity: Vec<usize> = (0..h.aux).collect();
        assert_eq!(shape(&g, &perm), shape(&h, &identity), "{f}");
        for &q in &g.nodes {
            let image = if q == g.aux { h.aux } else { perm[q] };
            assert_eq!(g.distance(q), h.distance(image));
        }
        checked += 1;
    }
    assert!(checked >= 30, "only {checked} formulas produced a graph");
}

fn run_random_mission(g: &AutomatonGraph, rng: &mut ChaCha8Rng, steps: usize) -> Result<usize, SymbolicError> {
    let mut m = MissionState::new(g);
    for _ in 0..steps {
        let step = m.next_action(g)?;
        let d_from = g.distance(step.from).expect("current node can reach the accepting set");
        if step.accepting {
            assert_eq!(d_from, 0);
        } else {
            assert_eq!(g.distance(step.next), Some(d_from - 1));
        }
        assert!(g.has_edge(step.from, step.next));
        assert!(step.symbol.is_feasible());
        if let Command::Act(p) = &step.command {
            assert_eq!(step.symbol.only(), Some(*p));
        }
        let before = m.accepting_history().len();
        let outcome = if rng.random_bool(0.85) { Outcome::Satisfied } else { Outcome::Infeasible };
        m.report_outcome(g, outcome)?;
        let grew = m.accepting_history().len() - before;
        assert_eq!(grew, usize::from(outcome == Outcome::Satisfied && step.accepting));
        if outcome == Outcome::Satisfied {
            assert_eq!(m.current(), step.next);
        } else {
            assert_eq!(m.current(), step.from);
        }
    }
    Ok(m.accepting_history().len())
}

#[test]
fn hundred_advances_keep_the_progress_invariant() {
    let formulas = [
        "G F grasp(1) & G F grasp(2)",
        "G F (grasp(1) & F release(1,2))",
        "G F release(1,1) & G F release(1,2) & G F grasp(2)",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for f in formulas {
        let g = mission_graph(&formula_to_nba(f).unwrap(), &Symbol::empty()).unwrap();
        for _ in 0..20 {
            match run_random_mission(&g, &mut rng, 100) {
                Ok(cycles) => assert!(cycles >= 5, "{f}: only {cycles} accepting traversals"),
                Err(SymbolicError::MissionUnrealizable) | Err(SymbolicError::NoProgressEdge { .. }) => {}
                Err(e) => panic!("{f}: {e}"),
            }
        }
    }
}

#[test]
fn always_satisfied_recurrent_missions_never_stall() {
    let g = mission_graph(&formula_to_nba("G F grasp(1) & G F grasp(2)").unwrap(), &Symbol::empty()).unwrap();
    let mut m = MissionState::new(&g);
    for _ in 0..100 {
        m.next_action(&g).unwrap();
        m.report_outcome(&g, Outcome::Satisfied).unwrap();
    }
    assert!(m.accepting_history().len() >= 30);
}

#[test]
fn empty_graph_for_unsatisfiable_conjunction() {
    let nba = formula_to_nba("G (grasp(1) & grasp(2))").unwrap();
    assert_eq!(mission_graph(&nba, &Symbol::empty()), Err(SymbolicError::EmptyGraph));
}
