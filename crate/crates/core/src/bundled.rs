//! Bundled example systems used by tests and the CLI selftest.

use crate::cycle::{period_solve, LimitCycle, Section};
use crate::error::Result;
use crate::system::SystemSpec;

pub const CIRCLE_PSI: [&str; 2] = [
    "-x2 + x1*(1 - x1^2 - x2^2)",
    "x1 + x2*(1 - x1^2 - x2^2)",
];
pub const VDP_PSI: [&str; 2] = ["x2", "(1 - x1^2)*x2 - x1"];

/// Planar system with the explicit unit-circle limit cycle (cos t, sin t),
/// T = 2*pi, multipliers {1, e^{-4 pi}}; forcing phi = (cos t, sin t).
pub fn circle() -> SystemSpec {
    circle_with_phi("cos(t)", "sin(t)")
}

pub fn circle_with_phi(phi1: &str, phi2: &str) -> SystemSpec {
    SystemSpec::new(
        2,
        2.0 * std::f64::consts::PI,
        &CIRCLE_PSI,
        &[phi1, phi2],
    )
    .expect("circle system parses")
}

/// Circle system analyzed at a multiple of the least period.
pub fn circle_period(period: f64) -> SystemSpec {
    SystemSpec::new(2, period, &CIRCLE_PSI, &["cos(t)", "sin(t)"]).expect("circle system parses")
}

pub fn circle_section() -> Section {
    Section {
        coord: 2,
        value: 0.0,
        direction: 1,
    }
}

pub fn vdp_section() -> Section {
    Section {
        coord: 2,
        value: 0.0,
        direction: 1,
    }
}

/// Van der Pol oscillator (mu = 1) with its least period solved by shooting,
/// forced by phi = (cos(2 pi t / T), 0). Returns the forced spec together
/// with the cycle found at the solved period.
pub fn van_der_pol_forced(tol: f64, mult_tol: f64) -> Result<(SystemSpec, LimitCycle)> {
    let probe = SystemSpec::new(2, 1.0, &VDP_PSI, &["0", "0"])?;
    let cycle = period_solve(&probe, &[2.0, 0.0], vdp_section(), tol, mult_tol)?;
    let omega = 2.0 * std::f64::consts::PI / cycle.period;
    let phi1 = format!("cos({omega}*t)");
    let spec = SystemSpec::new(2, cycle.period, &VDP_PSI, &[phi1.as_str(), "0"])?;
    Ok((spec, cycle))
}
