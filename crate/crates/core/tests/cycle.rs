//! Shooting, period solving, multiplier classification and cycle invariants.

use cycledeg::bundled;
use cycledeg::cycle::{find_cycle, least_period_divisor, multipliers_and_beta, period_solve};
use cycledeg::error::Error;
use cycledeg::lcg::Lcg;
use cycledeg::ode::norm;
use cycledeg::system::SystemSpec;
use nalgebra::DMatrix;
use std::f64::consts::PI;

const TOL: f64 = 1e-10;
const MULT_TOL: f64 = 1e-6;

#[test]
fn circle_cycle_from_perturbed_seed() {
    let spec = bundled::circle();
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    assert!((cycle.xi0[0] - 1.0).abs() <= 1e-8 && cycle.xi0[1].abs() <= 1e-8);
    assert!(cycle.nondegenerate);
    assert_eq!(cycle.p, 1);
    // periodicity residual
    let end = cycle.trajectory.eval(cycle.period);
    let d = [end[0] - cycle.xi0[0], end[1] - cycle.xi0[1]];
    assert!(norm(&d) <= 1e-9 * (1.0 + norm(&cycle.xi0)));
}

#[test]
fn trivial_multiplier_eigenvector_is_velocity() {
    let spec = bundled::circle();
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    let v = spec.eval_psi(&cycle.xi0);
    let mv = &cycle.monodromy * DMatrix::from_column_slice(2, 1, &v);
    let d = [mv[(0, 0)] - v[0], mv[(1, 0)] - v[1]];
    assert!(norm(&d) <= 1e-6 * norm(&v), "defect {}", norm(&d));
}

#[test]
fn seed_at_equilibrium_is_rejected() {
    let spec = bundled::circle();
    let r = find_cycle(&spec, &[0.0, 0.0], bundled::circle_section(), TOL, MULT_TOL);
    assert!(
        matches!(r, Err(Error::SectionMiss { .. }) | Err(Error::NoConvergence { .. })),
        "{r:?}"
    );
}

#[test]
fn period_solve_circle() {
    let spec = SystemSpec::new(2, 1.0, &bundled::CIRCLE_PSI, &["0", "0"]).unwrap();
    let cycle = period_solve(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    assert!((cycle.period - 2.0 * PI).abs() <= 1e-8, "T = {}", cycle.period);
    assert!((cycle.xi0[0] - 1.0).abs() <= 1e-8);
    assert_eq!(cycle.p, 1);
}

#[test]
fn period_solve_van_der_pol() {
    // oracle: the same shooting refined at tol 1e-12, cross-checked against
    // the known least period near 6.6633
    let spec = SystemSpec::new(2, 1.0, &bundled::VDP_PSI, &["0", "0"]).unwrap();
    let coarse = period_solve(&spec, &[2.0, 0.0], bundled::vdp_section(), 1e-8, MULT_TOL).unwrap();
    let fine = period_solve(&spec, &[2.0, 0.0], bundled::vdp_section(), 1e-12, MULT_TOL).unwrap();
    assert!((coarse.period - fine.period).abs() <= 1e-6);
    assert!((fine.period - 6.6633).abs() <= 1e-3, "T = {}", fine.period);
    // two multipliers: the trivial one and a contracting one
    let other = fine.multipliers[1 - fine.trivial_index];
    assert!(other.norm() < 1.0);
    assert_eq!(fine.beta, 0);
}

#[test]
fn linear_center_is_degenerate() {
    let spec = SystemSpec::new(2, 1.0, &["x2", "-x1"], &["0", "0"]).unwrap();
    let r = period_solve(&spec, &[1.0, 0.0], bundled::circle_section(), TOL, MULT_TOL);
    assert!(matches!(r, Err(Error::DegenerateCycle { .. })), "{r:?}");
}

#[test]
fn multiplier_classification_on_diagonal_matrices() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, (-4.0 * PI).exp()]);
    let d = multipliers_and_beta(&m, MULT_TOL).unwrap();
    assert!((d.multipliers[d.trivial_index].re - 1.0).abs() <= 1e-12);
    assert_eq!(d.beta, 0);
    assert!(d.nondegenerate);

    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
    let d = multipliers_and_beta(&m, MULT_TOL).unwrap();
    assert_eq!(d.beta, 1);
    assert!(d.nondegenerate);

    let m = DMatrix::identity(2, 2);
    assert!(matches!(
        multipliers_and_beta(&m, MULT_TOL),
        Err(Error::DegenerateCycle { .. })
    ));
}

#[test]
fn beta_counts_complex_pairs_evenly() {
    // multipliers {1, 1.5 e^{+-i pi/3}}: modulus > 1 complex pair adds 2,
    // leaving the parity (and sign det) positive
    let r = 1.5f64;
    let (c, s) = ((PI / 3.0).cos() * r, (PI / 3.0).sin() * r);
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c],
    );
    let d = multipliers_and_beta(&m, MULT_TOL).unwrap();
    assert_eq!(d.beta, 2);
    assert!(d.nondegenerate);
}

#[test]
fn multiplier_product_matches_determinant() {
    let spec = bundled::circle();
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    let prod = cycle
        .multipliers
        .iter()
        .fold(num_complex::Complex64::new(1.0, 0.0), |a, b| a * b);
    let det = cycle.monodromy.determinant();
    assert!(prod.im.abs() <= 1e-8 * det.abs());
    assert!((prod.re - det).abs() <= 1e-8 * det.abs());
}

#[test]
fn liouville_determinant_identity() {
    // oracle: independent trace quadrature over the dense cycle
    let spec = bundled::circle();
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    let panels = 512;
    let w = cycle.period / panels as f64;
    let mut acc = 0.0;
    // 2-point Gauss per panel is plenty at this panel count
    let nodes = [-(1.0f64 / 3.0f64).sqrt(), (1.0f64 / 3.0f64).sqrt()];
    for p in 0..panels {
        for nd in nodes {
            let tau = w * p as f64 + 0.5 * w * (1.0 + nd);
            let x = cycle.point(tau);
            acc += 0.5 * w * spec.psi_jacobian_matrix(&x).trace();
        }
    }
    let det = cycle.monodromy.determinant();
    let rel = (det - acc.exp()).abs() / acc.exp();
    assert!(rel <= 1e-6, "det {det} vs exp(int trace) {}", acc.exp());
}

#[test]
fn circle_multipliers_against_analytic_value() {
    let spec = bundled::circle();
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    let other = cycle.multipliers[1 - cycle.trivial_index];
    assert!((other.re - (-4.0 * PI).exp()).abs() <= 1e-6);
    assert!(other.im.abs() <= 1e-6);
}

#[test]
fn reconverges_from_perturbed_seed() {
    let spec = bundled::circle();
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    let mut rng = Lcg::new(0x5EED);
    let seed = [
        cycle.xi0[0] + 1e-3 * (rng.next_f64() - 0.5),
        cycle.xi0[1] + 1e-3 * (rng.next_f64() - 0.5),
    ];
    let again = find_cycle(&spec, &seed, bundled::circle_section(), TOL, MULT_TOL).unwrap();
    let d = [again.xi0[0] - cycle.xi0[0], again.xi0[1] - cycle.xi0[1]];
    assert!(norm(&d) <= 1e-6, "xi0 moved by {}", norm(&d));
}

#[test]
fn doubled_period_gives_divisor_two() {
    let spec = bundled::circle_period(4.0 * PI);
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    assert_eq!(cycle.p, 2);
    assert_eq!(least_period_divisor(&cycle, 1e-8), 2);
}

#[test]
fn wrong_crossing_direction_is_section_miss() {
    // the cycle crosses x2 = 0 upward at (1, 0); requiring a downward
    // crossing there must be refused
    let spec = bundled::circle();
    let section = cycledeg::cycle::Section {
        coord: 2,
        value: 0.0,
        direction: -1,
    };
    let r = find_cycle(&spec, &[1.1, 0.0], section, TOL, MULT_TOL);
    assert!(matches!(r, Err(Error::SectionMiss { .. })), "{r:?}");
}

#[test]
fn unstable_cycle_has_beta_one() {
    // r' = -0.05 r (1 - r^2): the unit cycle repels with multiplier
    // e^{0.2 pi} > 1, so beta = 1 and sign det(I - M~) is negative
    let spec = SystemSpec::new(
        2,
        2.0 * PI,
        &[
            "-x2 - 0.05*x1*(1 - x1^2 - x2^2)",
            "x1 - 0.05*x2*(1 - x1^2 - x2^2)",
        ],
        &["0", "0"],
    )
    .unwrap();
    let cycle = find_cycle(&spec, &[1.02, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    assert!(cycle.nondegenerate);
    assert_eq!(cycle.beta, 1);
    let other = cycle.multipliers[1 - cycle.trivial_index];
    let expect = (0.2 * PI).exp();
    assert!((other.re - expect).abs() <= 1e-6, "{other}");
}
