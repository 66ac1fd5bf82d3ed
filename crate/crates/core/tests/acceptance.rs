//! Verification suite: one test per criterion, at the pinned scales and
//! tolerances. The expensive ensembles are shared across criteria through
//! the lazy context, so the whole suite costs two large Monte Carlo runs
//! plus the determinism rerun.
//!
//! Run with `cargo test -p multishock --test acceptance -- --nocapture` to
//! see one status line per criterion.

use std::sync::OnceLock;

use multishock::acceptance::Acceptance;

fn suite() -> &'static Acceptance {
    static SUITE: OnceLock<Acceptance> = OnceLock::new();
    SUITE.get_or_init(Acceptance::new)
}

fn run(id: usize) {
    let report = suite().run(id);
    println!("{}", report.status_line());
    for line in &report.details {
        println!("    {line}");
    }
    assert!(report.pass, "criterion {id} failed: {:?}", report.details);
}

#[test]
fn criterion_01_exact_generator_oracle() {
    run(1);
}

#[test]
fn criterion_02_one_shock_gaussian_fluctuations() {
    run(2);
}

#[test]
fn criterion_03_one_shock_mixture() {
    run(3);
}

#[test]
fn criterion_04_two_shock_coalescence_law() {
    run(4);
}

#[test]
fn criterion_05_mixture_of_product_measures() {
    run(5);
}

#[test]
fn criterion_06_density_field() {
    run(6);
}

#[test]
fn criterion_07_psi_well_posedness_and_closed_forms() {
    run(7);
}

#[test]
fn criterion_08_coupling_invariants() {
    run(8);
}

#[test]
fn criterion_09_predictor() {
    run(9);
}

#[test]
fn criterion_10_determinism_across_worker_counts() {
    run(10);
}
