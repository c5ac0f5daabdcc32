//! Perturbed-orbit solving, eps sweeps and existence-condition verdicts.

use cycledeg::adjoint::{periodic_adjoint, AdjointCycle};
use cycledeg::bundled;
use cycledeg::cycle::{find_cycle, LimitCycle};
use cycledeg::degree::{aggregate_degree, Region};
use cycledeg::malkin::sample_f;
use cycledeg::ode::norm;
use cycledeg::system::SystemSpec;
use cycledeg::verify::{check_existence_conditions, epsilon_sweep, find_perturbed_orbit};
use std::f64::consts::PI;

const TOL: f64 = 1e-10;
const MULT_TOL: f64 = 1e-6;

fn circle_pair(phi1: &str, phi2: &str) -> (SystemSpec, LimitCycle, AdjointCycle) {
    let spec = bundled::circle_with_phi(phi1, phi2);
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    let adj = periodic_adjoint(&spec, &cycle, TOL).unwrap();
    (spec, cycle, adj)
}

#[test]
fn perturbed_orbit_near_simple_zero() {
    // theta = 0 is a simple zero of f = -2 pi sin(theta)
    let (spec, cycle, _) = circle_pair("cos(t)", "sin(t)");
    let orbit = find_perturbed_orbit(&spec, &cycle, 0.0, 1e-3, TOL).unwrap();
    assert!(orbit.residual <= 1e-9 * (1.0 + norm(&orbit.xi)));
    assert!(orbit.sup_distance <= 5e-3, "sup {}", orbit.sup_distance);
}

#[test]
fn unperturbed_seed_is_residual_check() {
    let (spec, cycle, _) = circle_pair("cos(t)", "sin(t)");
    let orbit = find_perturbed_orbit(&spec, &cycle, 1.0, 0.0, TOL).unwrap();
    let seed = cycle.point(1.0);
    assert_eq!(orbit.xi, seed);
    assert!(orbit.residual <= 1e-9 * (1.0 + norm(&seed)));
    assert!(orbit.sup_distance <= 1e-8);
}

#[test]
fn off_zero_seed_converges_to_zero_phase() {
    // seeding at theta0 = pi/2 (not a zero of f) still lands on an orbit
    // whose phase is near a true zero {0, pi}
    let (spec, cycle, _) = circle_pair("cos(t)", "sin(t)");
    let orbit = find_perturbed_orbit(&spec, &cycle, PI / 2.0, 1e-3, TOL).unwrap();
    let d0 = orbit.theta_hat.min(cycle.period - orbit.theta_hat);
    let dpi = (orbit.theta_hat - PI).abs();
    let dseed = (orbit.theta_hat - PI / 2.0).abs();
    let dzero = d0.min(dpi);
    assert!(
        dzero < dseed,
        "theta_hat {} should be nearer {{0, pi}} than pi/2",
        orbit.theta_hat
    );
    assert!(dzero <= 0.2, "theta_hat {}", orbit.theta_hat);
}

#[test]
fn reintegration_at_tighter_tolerance_confirms_periodicity() {
    let (spec, cycle, _) = circle_pair("cos(t)", "sin(t)");
    let orbit = find_perturbed_orbit(&spec, &cycle, 0.0, 1e-3, TOL).unwrap();
    let mut s = cycledeg::system::EvalScratch::default();
    let endpoint = cycledeg::ode::integrate_endpoint(
        |t: f64, x: &[f64], out: &mut [f64]| {
            spec.eval_perturbed_into(t, x, 1e-3, out, &mut s);
        },
        &orbit.xi,
        (0.0, spec.period),
        1e-12,
    )
    .unwrap();
    let d: Vec<f64> = endpoint.iter().zip(&orbit.xi).map(|(a, b)| a - b).collect();
    assert!(norm(&d) <= 1e-7, "re-integrated residual {}", norm(&d));
}

#[test]
fn sweep_slope_near_one_on_circle() {
    let (spec, cycle, _) = circle_pair("cos(t)", "sin(t)");
    let report = epsilon_sweep(&spec, &cycle, 0.0, 1e-2, 8, TOL).unwrap();
    assert!(report.failed.is_none(), "{:?}", report.failed);
    assert_eq!(report.eps.len(), 9);
    assert!(report.slope >= 0.9, "slope {}", report.slope);
    // monotone non-increasing with 5% noise margin
    for w in report.sup_distance.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{:?}", report.sup_distance);
    }
    // theta_hat approaches a zero of f as eps decreases
    let last = *report.theta_hat.last().unwrap();
    let d = last.min(cycle.period - last).min((last - PI).abs());
    assert!(d <= 0.1, "theta_hat {last}");
}

#[test]
fn zero_perturbation_sweep_stays_on_cycle() {
    let (spec, cycle, _) = circle_pair("0", "0");
    let report = epsilon_sweep(&spec, &cycle, 0.0, 1e-2, 4, TOL).unwrap();
    for s in &report.sup_distance {
        assert!(*s <= 1e-8, "{:?}", report.sup_distance);
    }
}

#[test]
fn van_der_pol_sweep_from_detected_zero() {
    let (vspec, vcycle) = bundled::van_der_pol_forced(TOL, MULT_TOL).unwrap();
    let vadj = periodic_adjoint(&vspec, &vcycle, TOL).unwrap();
    let bf = sample_f(&vcycle, &vadj, &vspec, 128, 64).unwrap();
    let zero = bf
        .zeros()
        .iter()
        .find(|z| z.kind == cycledeg::malkin::ZeroKind::SignChange)
        .expect("forced van der Pol has a sign-change zero");
    let report = epsilon_sweep(&vspec, &vcycle, zero.theta_star, 1e-2, 6, TOL).unwrap();
    assert!(report.failed.is_none(), "{:?}", report.failed);
    assert!(report.slope >= 0.9, "slope {}", report.slope);
}

#[test]
fn existence_conditions_on_worked_examples() {
    let region = Region::Box {
        lo: vec![-2.0, -2.0],
        hi: vec![0.5, 2.0],
    };

    // phi = (-cos, -sin): total 2, degree route applies; f changes sign
    let (spec, cycle, adj) = circle_pair("-cos(t)", "-sin(t)");
    let bf = sample_f(&cycle, &adj, &spec, 256, 64).unwrap();
    let report = aggregate_degree(&spec, &cycle, &adj, &bf, &region).unwrap();
    let summary = check_existence_conditions(&bf, &report).unwrap();
    assert!(summary.degree_existence.applies);
    assert_eq!(summary.degree_existence.total, 2);
    assert!(!summary.sign_change_brackets.is_empty());
    assert!(!summary.same_sign_route.applies); // f flips sign between contact endpoints

    // phi = (cos, sin): total 0, degree route does not apply, but sign-change
    // brackets still certify orbits near the cycle
    let (spec, cycle, adj) = circle_pair("cos(t)", "sin(t)");
    let bf = sample_f(&cycle, &adj, &spec, 256, 64).unwrap();
    let report = aggregate_degree(&spec, &cycle, &adj, &bf, &region).unwrap();
    let summary = check_existence_conditions(&bf, &report).unwrap();
    assert!(!summary.degree_existence.applies);
    assert_eq!(summary.degree_existence.total, 0);
    assert_eq!(summary.certified_zeros.len(), 2);
}

#[test]
fn existence_without_contacts_uses_field_degree() {
    // constant-sign f (phi = (-x2, x1)) and an interior region: no contacts,
    // total = (+1) * d_psi = 1
    let (spec, cycle, adj) = circle_pair("-x2", "x1");
    let bf = sample_f(&cycle, &adj, &spec, 64, 64).unwrap();
    let region = Region::Ball {
        center: vec![0.0, 0.0],
        radius: 2.0,
    };
    let report = aggregate_degree(&spec, &cycle, &adj, &bf, &region).unwrap();
    let summary = check_existence_conditions(&bf, &report).unwrap();
    assert!(summary.degree_existence.applies);
    assert_eq!(summary.degree_existence.total, 1);
    assert!(summary.same_sign_route.applies); // vacuous contacts + d_psi != 0
    assert!(summary.sign_change_brackets.is_empty());
}
