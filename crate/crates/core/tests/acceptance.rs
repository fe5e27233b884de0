//! Acceptance criteria 1 to 10, one test each, at full size.
//!
//! Every criterion prints one PASS/FAIL line followed by its checks. Checks
//! listed in `KNOWN_RED` are expected to fail at the stated fixture; they are
//! reported as red and the test fails if one of them starts passing, so the
//! list cannot go stale.

use std::io::Write;
use std::sync::Mutex;

use regen_lab::acceptance::{run_criterion, AcceptancePlan, CriterionOutcome};
use regen_lab::bins::basic::geometric_target;
use regen_lab::bins::links::renewal_product;
use regen_lab::core::Alphabet;
use regen_lab::oracle::{run_preset, EventPreset, OraclePlan};
use regen_lab::walk::{skip_free_occurrence, FutureVariant};

/// `(criterion, check)` pairs that fail at the stated fixtures.
const KNOWN_RED: &[(u8, &str)] = &[(1, "c_iid"), (6, "cycles")];

/// `∏_{i ≥ 1}^{64} (1 - 2^{-i})`, evaluated independently in extended precision.
const RENEWAL_PRODUCT_HALF_64: f64 = 0.288_788_095_086_602_4;

/// `1 - q/p` at `p = 0.4`, `q = 0.2`.
const WALK_DENSITY: f64 = 0.5;

/// Criteria run one at a time so that each runtime is measured alone.
static SERIAL: Mutex<()> = Mutex::new(());

fn emit(outcome: &CriterionOutcome) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", outcome.line()).unwrap();
    for c in &outcome.checks {
        let red = KNOWN_RED.contains(&(outcome.id, c.name.as_str()));
        let tag = match (c.pass, red) {
            (true, _) => "ok",
            (false, true) => "RED (known)",
            (false, false) => "FAIL",
        };
        let value = c.value.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
        writeln!(out, "    {tag:<11} {:<34} value {value:<14} target {}", c.name, c.target).unwrap();
    }
}

fn check_criterion(id: u8) {
    let outcome = {
        let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
        run_criterion(id, &AcceptancePlan::default()).expect("known criterion")
    };
    emit(&outcome);
    for c in &outcome.checks {
        let red = KNOWN_RED.contains(&(id, c.name.as_str()));
        if red {
            assert!(!c.pass, "criterion {id} check {} now passes; remove it from KNOWN_RED", c.name);
        } else {
            assert!(c.pass, "criterion {id} check {} failed: value {:?}, target {}", c.name, c.value, c.target);
        }
    }
}

#[test]
fn frozen_constants() {
    let direct: f64 = (1..=64).map(|i| 1.0 - 0.5f64.powi(i)).product();
    assert!((direct - RENEWAL_PRODUCT_HALF_64).abs() < 1e-15);
    assert!((geometric_target(0.5, 64) - RENEWAL_PRODUCT_HALF_64).abs() < 1e-15);
    assert!((renewal_product(0.5, 64) - RENEWAL_PRODUCT_HALF_64).abs() < 1e-15);
    assert_eq!(skip_free_occurrence(0.4, 0.2, FutureVariant::Weak), WALK_DENSITY);
}

#[test]
fn frozen_exact_oracle_values() {
    let a = Alphabet::walk_rational((1, 4), (1, 4)).unwrap();
    let plan = OraclePlan { t_max: 6, lookahead: 6, max_m: 6, n_max: 2, cross_check_replicas: 0, seed: 1 };
    let b = run_preset(EventPreset::Example1b, &a, &plan).unwrap();
    assert_eq!(b.next_zero_after_unit_gap.as_deref(), Some("1/1"));
    let r = run_preset(EventPreset::Example1a, &a, &plan).unwrap();
    assert_eq!(r.total_mass, "1/1");
    assert_eq!(r.gap_law.unwrap().constant.as_deref(), Some("1/1"));
}

#[test]
fn criterion_01_future_minimum_trichotomy() {
    check_criterion(1);
}

#[test]
fn criterion_02_gap_law_flatness() {
    check_criterion(2);
}

#[test]
fn criterion_03_walk_density() {
    check_criterion(3);
}

#[test]
fn criterion_04_mean_cycle_identity() {
    check_criterion(4);
}

#[test]
fn criterion_05_coupling_exactness() {
    check_criterion(5);
}

#[test]
fn criterion_06_three_state_suite() {
    check_criterion(6);
}

#[test]
fn criterion_07_bins_convergence() {
    check_criterion(7);
}

#[test]
fn criterion_08_links_model() {
    check_criterion(8);
}

#[test]
fn criterion_09_harris_split() {
    check_criterion(9);
}

#[test]
fn criterion_10_calibration() {
    check_criterion(10);
}
