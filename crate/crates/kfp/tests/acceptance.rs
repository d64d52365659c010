//! Acceptance gate: one test per quantitative criterion, each printing its
//! pass/fail line with the measured values and asserting both the outcome
//! and the check's own runtime budget. The expensive desk-scale artifacts
//! (assembled system, stabilizability report, Riccati design) are built
//! once and shared, so each test's clock measures its own criterion.

use kfp::analyze::{spectrum_report, StabilizabilityReport};
use kfp::config::RunConfig;
use kfp::discretize::sinc_diff_matrices;
use kfp::verify::{
    build_system, check_decay_rates, check_differentiation, check_dissipation_identity,
    check_equilibrium_determinism, check_harmonic_spectrum, check_kernel_annihilation,
    check_lyapunov_oracle, check_mode_visibility, check_riccati_quality,
    check_rotated_decay, check_small_riccati, CheckReport, FeedbackDesign, System,
};
use std::sync::OnceLock;

fn desk() -> &'static System {
    static SYS: OnceLock<System> = OnceLock::new();
    SYS.get_or_init(|| {
        build_system(&RunConfig::default()).expect("the desk-scale system assembles")
    })
}

fn mode_visibility() -> &'static (CheckReport, Option<StabilizabilityReport>) {
    static H: OnceLock<(CheckReport, Option<StabilizabilityReport>)> = OnceLock::new();
    H.get_or_init(|| check_mode_visibility(desk()))
}

fn riccati_design() -> &'static (CheckReport, Option<FeedbackDesign>) {
    static R: OnceLock<(CheckReport, Option<FeedbackDesign>)> = OnceLock::new();
    R.get_or_init(|| check_riccati_quality(desk()))
}

fn finish(report: &CheckReport, budget_seconds: f64) {
    println!("{}", report.render());
    assert!(report.passed, "criterion failed:\n{}", report.render());
    assert!(
        report.seconds < budget_seconds,
        "'{}' exceeded its {budget_seconds} s budget: {:.2} s",
        report.name,
        report.seconds
    );
}

#[test]
fn c01_differentiation_structure_and_accuracy() {
    let grid = RunConfig::default().grid().unwrap();
    let dm = sinc_diff_matrices((grid.points_x() - 1) / 2, grid.hx());
    finish(&check_differentiation(&dm, grid.hx()), 1.0);
}

#[test]
fn c02_generator_annihilates_constants() {
    let report = check_kernel_annihilation(&desk().bundle.a_direct);
    finish(&report, 1.0);
}

#[test]
fn c03_harmonic_spectrum_closed_form() {
    finish(&check_harmonic_spectrum(), 30.0);
}

#[test]
fn c04_dissipation_identity() {
    finish(&check_dissipation_identity(), 5.0);
}

#[test]
fn c05_lyapunov_oracle_agreement() {
    finish(&check_lyapunov_oracle(2024), 10.0);
}

#[test]
fn c06_small_riccati_closed_forms() {
    finish(&check_small_riccati(3), 10.0);
}

#[test]
fn c07_unstable_mode_count_and_visibility() {
    let (report, _) = mode_visibility();
    finish(report, 60.0);
}

#[test]
fn c08_riccati_quality_at_scale() {
    let (report, _) = riccati_design();
    finish(report, 120.0);
}

#[test]
fn c09_feedback_steepens_decay() {
    let sys = desk();
    let lead = mode_visibility()
        .1
        .as_ref()
        .map(|h| h.spectrum.eigenvalues[0].re)
        .unwrap_or_else(|| {
            spectrum_report(&sys.deflated.a_hat).unwrap().eigenvalues[0].re
        });
    let design = riccati_design()
        .1
        .as_ref()
        .expect("the Riccati design is available for reuse");
    finish(&check_decay_rates(sys, lead, &design.gain), 120.0);
}

#[test]
fn c10_rotated_state_reaches_equilibrium() {
    let design = riccati_design()
        .1
        .as_ref()
        .expect("the Riccati design is available for reuse");
    finish(&check_rotated_decay(desk(), &design.gain), 180.0);
}

#[test]
fn c11_equilibrium_and_bitwise_determinism() {
    finish(&check_equilibrium_determinism(), 10.0);
}
