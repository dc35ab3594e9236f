mod common;

use infotamp::ltl::{parse_formula, translate, FormulaError, LtlFormula, Nba, NbaFormatError, Predicate, Symbol};
use proptest::prelude::*;

#[test]
fn translation_agrees_with_lasso_semantics() {
    let cases = common::corpus(0x17, 160, 4);
    assert!(cases.len() >= 500);
    let mut mismatches = Vec::new();
    let mut accepted = 0;
    for (f, prefix, cycle) in &cases {
        let nba = translate(f);
        let truth = common::holds_on_lasso(f, prefix, cycle);
        accepted += usize::from(truth);
        if nba.accepts_lasso(prefix, cycle) != truth {
            mismatches.push(format!("{f} on {prefix:?} ({cycle:?})^w"));
        }
    }
    assert!(mismatches.is_empty(), "{} mismatches, first: {}", mismatches.len(), mismatches[0]);
    // both verdicts well represented
    assert!(accepted * 5 > cases.len() && (cases.len() - accepted) * 5 > cases.len(), "{accepted}/{}", cases.len());
}

#[test]
fn oracle_sanity() {
    let g1 = Symbol::singleton(Predicate::grasp(1));
    let e = Symbol::empty();
    let f = parse_formula("G F grasp(1)").unwrap();
    assert!(common::holds_on_lasso(&f, &[], &[e.clone(), g1.clone()]));
    assert!(!common::holds_on_lasso(&f, std::slice::from_ref(&g1), std::slice::from_ref(&e)));
    let u = parse_formula("grasp(1) U grasp(2)").unwrap();
    assert!(!common::holds_on_lasso(&u, &[], std::slice::from_ref(&g1)));
}

#[test]
fn exchange_format_round_trips_translated_automata() {
    for (f, prefix, cycle) in common::corpus(0x29, 40, 3) {
        let nba = translate(&f);
        let back = Nba::import(&nba.export()).unwrap();
        assert_eq!(back.export(), nba.export());
        assert_eq!(back.accepts_lasso(&prefix, &cycle), nba.accepts_lasso(&prefix, &cycle));
    }
}

#[test]
fn import_errors_carry_line_numbers() {
    let err = Nba::import("states: 2\ninitial: 0\nfinal: 1\ntrans: 0 grasp(1) 5\n").unwrap_err();
    assert!(matches!(err, NbaFormatError::UndefinedState { line: 4, .. }), "{err:?}");
    let err = Nba::import("states: 2\ninitial: 0\nfinal: 1\ntrans: 0 lift(1) 1\n").unwrap_err();
    assert!(
        matches!(err, NbaFormatError::UnknownPredicate { line: 4, .. } | NbaFormatError::Malformed { line: 4, .. }),
        "{err:?}"
    );
}

#[test]
fn excluded_operators_are_rejected_with_positions() {
    assert!(matches!(parse_formula("F !grasp(1)"), Err(FormulaError::NegationExcluded { pos: 2 })));
    assert!(matches!(parse_formula("X grasp(1)"), Err(FormulaError::NextExcluded { pos: 0 })));
    assert!(matches!(parse_formula("F lift(1)"), Err(FormulaError::UnknownPredicate { .. })));
    assert!(matches!(parse_formula("F (grasp(1)"), Err(FormulaError::Syntax { .. })));
    assert!(matches!(parse_formula("grasp(0)"), Err(FormulaError::Syntax { .. })));
}

fn arb_predicate() -> impl Strategy<Value = Predicate> {
    prop_oneof![(1u32..4).prop_map(Predicate::grasp), (1u32..4, 1u32..4).prop_map(|(o, r)| Predicate::release(o, r)),]
}

fn arb_formula() -> impl Strategy<Value = LtlFormula> {
    let leaf = prop_oneof![Just(LtlFormula::True), arb_predicate().prop_map(LtlFormula::atom)];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| LtlFormula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| LtlFormula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| LtlFormula::until(a, b)),
            inner.clone().prop_map(LtlFormula::eventually),
            inner.prop_map(LtlFormula::always),
        ]
    })
}

proptest! {
    #[test]
    fn display_then_parse_is_identity(f in arb_formula()) {
        prop_assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn translation_is_deterministic(f in arb_formula()) {
        prop_assert_eq!(translate(&f).export(), translate(&f).export());
    }
}
