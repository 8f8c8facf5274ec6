//! Every acceptance criterion at its stated tolerance, one line each.

use spotcheck_core::harness::verify::{run_criterion, CRITERIA};

fn run(id: usize) {
    let outcome = run_criterion(id, None);
    println!("{outcome}");
    assert!(outcome.passed, "{outcome}");
}

#[test]
fn c1_dominance_threshold() {
    run(1);
}

#[test]
fn c2_equilibrium_utility_table() {
    run(2);
}

#[test]
fn c3_sufficient_condition() {
    run(3);
}

#[test]
fn c4_pareto_above_dominance() {
    run(4);
}

#[test]
fn c5_low_signal_report_optimal() {
    run(5);
}

#[test]
fn c6_dominated_construction() {
    run(6);
}

#[test]
fn c7_monte_carlo_agreement() {
    run(7);
}

#[test]
fn c8_scoring_rules() {
    run(8);
}

#[test]
fn c9_harness_determinism() {
    run(9);
}

#[test]
fn criteria_are_all_covered() {
    assert_eq!(CRITERIA.len(), 9);
}
