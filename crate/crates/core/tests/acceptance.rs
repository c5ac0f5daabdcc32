//! Acceptance suite: each test pins one verifiable claim about the toolkit at
//! its stated tolerance and prints one pass/fail line (visible under
//! `cargo test -- --nocapture`).

use cycledeg::adjoint::{periodic_adjoint, perron_residual, AdjointCycle};
use cycledeg::bundled;
use cycledeg::cycle::{find_cycle, LimitCycle};
use cycledeg::degree::{
    brouwer_degree_psi, poincare_degree, aggregate_degree, winding_degree, Region,
};
use cycledeg::lcg::Lcg;
use cycledeg::malkin::{degree_on_interval, eval_f, eval_f_alt, sample_f, ZeroKind};
use cycledeg::ode::{flow_with_variational, norm};
use cycledeg::system::SystemSpec;
use cycledeg::verify::{epsilon_sweep, find_perturbed_orbit};
use std::f64::consts::PI;
use std::time::Instant;

const TOL: f64 = 1e-10;
const MULT_TOL: f64 = 1e-6;

fn circle_pair(phi1: &str, phi2: &str) -> (SystemSpec, LimitCycle, AdjointCycle) {
    let spec = bundled::circle_with_phi(phi1, phi2);
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    let adj = periodic_adjoint(&spec, &cycle, TOL).unwrap();
    (spec, cycle, adj)
}

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

#[test]
fn criterion_01_floquet_recovery() {
    let start = Instant::now();
    let (_, cycle, _) = circle_pair("cos(t)", "sin(t)");
    let trivial = cycle.multipliers[cycle.trivial_index];
    let other = cycle.multipliers[1 - cycle.trivial_index];
    let e1 = (trivial - num_complex::Complex64::new(1.0, 0.0)).norm();
    let e2 = (other - num_complex::Complex64::new(3.4873e-6, 0.0)).norm();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = e1 <= 1e-8 && e2 <= 1e-6 && cycle.beta == 0 && elapsed < 1.0;
    report(
        1,
        "Floquet recovery",
        pass,
        &format!("|l1-1|={e1:.2e}, |l2-3.4873e-6|={e2:.2e}, beta={}, {elapsed:.2}s", cycle.beta),
    );
}

#[test]
fn criterion_02_perron_invariant() {
    let (_, cycle, adj) = circle_pair("cos(t)", "sin(t)");
    let r1 = perron_residual(&cycle, &adj);
    let (vspec, vcycle) = bundled::van_der_pol_forced(TOL, MULT_TOL).unwrap();
    let vadj = periodic_adjoint(&vspec, &vcycle, TOL).unwrap();
    let r2 = perron_residual(&vcycle, &vadj);
    let pass = r1 <= 1e-6 && r2 <= 1e-6;
    report(
        2,
        "Perron invariant",
        pass,
        &format!("circle {r1:.2e}, van der Pol {r2:.2e} (<= 1e-6)"),
    );
}

#[test]
fn criterion_03_bifurcation_function_closed_form() {
    let (spec, cycle, adj) = circle_pair("cos(t)", "sin(t)");
    let mut worst = 0.0f64;
    for i in 0..64 {
        let th = cycle.period * i as f64 / 64.0;
        let v = eval_f(&cycle, &adj, &spec, th, 64).unwrap();
        worst = worst.max((v + 2.0 * PI * th.sin()).abs());
    }
    let bf = sample_f(&cycle, &adj, &spec, 256, 64).unwrap();
    let mut stars: Vec<f64> = bf
        .zeros()
        .iter()
        .filter(|z| z.kind == ZeroKind::SignChange)
        .map(|z| z.theta_star)
        .collect();
    stars.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let zeros_ok = stars.len() == 2 && stars[0].abs() <= 1e-8 && (stars[1] - PI).abs() <= 1e-8;
    let pass = worst <= 1e-6 && zeros_ok;
    report(
        3,
        "closed-form bifurcation function",
        pass,
        &format!("max |f + 2 pi sin| = {worst:.2e}, zeros {stars:?}"),
    );
}

#[test]
fn criterion_04_identity_between_routes() {
    let mut rng = Lcg::new(0x5EED);
    let mut detail = String::new();
    let mut pass = true;
    for (label, spec, cycle, adj) in [
        {
            let (s, c, a) = circle_pair("cos(t)", "sin(t)");
            ("circle", s, c, a)
        },
        {
            let (s, c) = bundled::van_der_pol_forced(TOL, MULT_TOL).unwrap();
            let a = periodic_adjoint(&s, &c, TOL).unwrap();
            ("van der Pol", s, c, a)
        },
    ] {
        let bf = sample_f(&cycle, &adj, &spec, 64, 64).unwrap();
        let allow = 1e-5 * (1.0 + bf.max_abs());
        let mut worst = 0.0f64;
        for _ in 0..16 {
            let th = rng.next_in(0.0, cycle.period);
            let a = eval_f(&cycle, &adj, &spec, th, 64).unwrap();
            let b = eval_f_alt(&cycle, &adj, &spec, th, 64, TOL).unwrap();
            worst = worst.max((a - b).abs());
        }
        pass &= worst <= allow;
        detail.push_str(&format!("{label}: {worst:.2e} <= {allow:.2e}; "));
    }
    report(4, "direct vs inverse-variational route", pass, &detail);
}

#[test]
fn criterion_05_degree_formula_matches_poincare_map() {
    let start = Instant::now();
    let ball = Region::Ball {
        center: vec![0.0, 0.0],
        radius: 2.0,
    };
    let boxr = Region::Box {
        lo: vec![-2.0, -2.0],
        hi: vec![0.5, 2.0],
    };
    let cases: [(&str, &str, &Region, i64); 3] = [
        ("cos(t)", "sin(t)", &ball, 1),
        ("-cos(t)", "-sin(t)", &boxr, 2),
        ("cos(t)", "sin(t)", &boxr, 0),
    ];
    let mut pass = true;
    let mut detail = String::new();
    for (p1, p2, region, expect) in cases {
        let (spec, cycle, adj) = circle_pair(p1, p2);
        let bf = sample_f(&cycle, &adj, &spec, 256, 64).unwrap();
        let total = aggregate_degree(&spec, &cycle, &adj, &bf, region)
            .unwrap()
            .total;
        pass &= total == expect;
        detail.push_str(&format!("formula({p1},{p2}) = {total}; "));
        for eps in [1e-2, 1e-3, 1e-4] {
            let pd = poincare_degree(&spec, region, eps, TOL).unwrap();
            pass &= pd == total;
            detail.push_str(&format!("poincare(eps={eps:.0e}) = {pd}; "));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 30.0;
    detail.push_str(&format!("{elapsed:.1}s"));
    report(5, "degree formula vs Poincare map", pass, &detail);
}

#[test]
fn criterion_06_empty_sum_reduction() {
    let (spec, cycle, adj) = circle_pair("cos(t)", "sin(t)");
    let region = Region::Ball {
        center: vec![0.0, 0.0],
        radius: 2.0,
    };
    let bf = sample_f(&cycle, &adj, &spec, 64, 64).unwrap();
    let rep = aggregate_degree(&spec, &cycle, &adj, &bf, &region).unwrap();
    let d_psi = brouwer_degree_psi(&spec, &region).unwrap();
    let pass = rep.contributions.is_empty() && rep.total == d_psi; // (-1)^2 = 1
    report(
        6,
        "empty-sum reduction",
        pass,
        &format!("total {} = (+1) * d_psi {d_psi}, contacts {}", rep.total, rep.contributions.len()),
    );
}

#[test]
fn criterion_07_perturbed_orbit_convergence() {
    let (spec, cycle, _) = circle_pair("cos(t)", "sin(t)");
    let orbit = find_perturbed_orbit(&spec, &cycle, 0.0, 1e-4, TOL).unwrap();
    let d = orbit
        .theta_hat
        .min(cycle.period - orbit.theta_hat)
        .min((orbit.theta_hat - PI).abs());
    let sweep = epsilon_sweep(&spec, &cycle, 0.0, 1e-2, 8, TOL).unwrap();
    let mut monotone = true;
    for w in sweep.sup_distance.windows(2) {
        monotone &= w[1] <= w[0] * 1.05;
    }
    let pass = d <= 0.1 && monotone && sweep.failed.is_none();
    report(
        7,
        "perturbed orbit converges to a zero phase",
        pass,
        &format!("theta_hat dist {d:.2e} (<= 0.1), sup distances {:?}", sweep.sup_distance),
    );
}

#[test]
fn criterion_08_convergence_rate() {
    let start = Instant::now();
    let (spec, cycle, _) = circle_pair("cos(t)", "sin(t)");
    let sweep = epsilon_sweep(&spec, &cycle, 0.0, 1e-2, 8, TOL).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = sweep.slope >= 0.9 && sweep.failed.is_none() && elapsed < 60.0;
    report(
        8,
        "convergence-rate slope",
        pass,
        &format!("slope {:.4} (>= 0.9), {elapsed:.1}s", sweep.slope),
    );
}

#[test]
fn criterion_09_degree_oracle_agreement() {
    let spec = bundled::circle();
    let regions = [
        Region::Ball {
            center: vec![0.0, 0.0],
            radius: 2.0,
        },
        Region::Box {
            lo: vec![-2.0, -2.0],
            hi: vec![0.5, 2.0],
        },
        Region::Ball {
            center: vec![0.0, 0.0],
            radius: 4.0,
        },
    ];
    let mut pass = true;
    let mut detail = String::new();
    for region in &regions {
        let d1 = brouwer_degree_psi(&spec, region).unwrap();
        let spec_ref = &spec;
        let d2 = winding_degree(
            |x, y| {
                let v = spec_ref.eval_psi(&[x, y]);
                Ok((v[0], v[1]))
            },
            region,
        )
        .unwrap();
        pass &= d1 == d2;
        detail.push_str(&format!("{d1}=={d2}; "));
    }
    // van der Pol region around its cycle
    let vspec = SystemSpec::new(2, 1.0, &bundled::VDP_PSI, &["0", "0"]).unwrap();
    let region = Region::Ball {
        center: vec![0.0, 0.0],
        radius: 4.0,
    };
    let d1 = brouwer_degree_psi(&vspec, &region).unwrap();
    let vref = &vspec;
    let d2 = winding_degree(
        |x, y| {
            let v = vref.eval_psi(&[x, y]);
            Ok((v[0], v[1]))
        },
        &region,
    )
    .unwrap();
    pass &= d1 == d2;
    detail.push_str(&format!("vdp {d1}=={d2}"));
    report(9, "Brouwer degree vs winding oracle", pass, &detail);
}

#[test]
fn criterion_10_derivative_checks() {
    // symbolic Jacobians vs central differences
    let spec = bundled::circle();
    let mut rng = Lcg::new(0x5EED);
    let mut worst_jac = 0.0f64;
    for _ in 0..100 {
        let x = [rng.next_in(-2.0, 2.0), rng.next_in(-2.0, 2.0)];
        let jac = spec.psi_jacobian_matrix(&x);
        let h = 1e-5;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fp = spec.eval_psi(&xp);
            let fm = spec.eval_psi(&xm);
            for i in 0..2 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                worst_jac = worst_jac.max((jac[(i, j)] - fd).abs() / (1.0 + fd.abs()));
            }
        }
    }
    // variational matrices vs flow finite differences
    let (spec, cycle, _) = circle_pair("cos(t)", "sin(t)");
    let mut worst_var = 0.0f64;
    for _ in 0..10 {
        let s = rng.next_in(0.0, cycle.period);
        let mut xi = cycle.point(s);
        xi[0] += rng.next_in(-0.05, 0.05);
        xi[1] += rng.next_in(-0.05, 0.05);
        let flow = flow_with_variational(&spec, &xi, cycle.period, 1e-12).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut xp = xi.clone();
            let mut xm = xi.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = flow_with_variational(&spec, &xp, cycle.period, 1e-12)
                .unwrap()
                .endpoint;
            let fm = flow_with_variational(&spec, &xm, cycle.period, 1e-12)
                .unwrap()
                .endpoint;
            for i in 0..2 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                worst_var = worst_var.max((flow.variational[(i, j)] - fd).abs() / (1.0 + fd.abs()));
            }
        }
    }
    let pass = worst_jac <= 1e-6 && worst_var <= 1e-4;
    report(
        10,
        "derivative checks",
        pass,
        &format!("jacobian {worst_jac:.2e} (<= 1e-6), variational {worst_var:.2e} (<= 1e-4)"),
    );
}

#[test]
fn criterion_11_scale_and_sign_invariance() {
    let region = Region::Box {
        lo: vec![-2.0, -2.0],
        hi: vec![0.5, 2.0],
    };
    let (spec, cycle, adj) = circle_pair("-cos(t)", "-sin(t)");
    let bf = sample_f(&cycle, &adj, &spec, 256, 64).unwrap();
    let base_total = aggregate_degree(&spec, &cycle, &adj, &bf, &region).unwrap().total;
    let base_deg = degree_on_interval(&bf, PI / 2.0, 3.0 * PI / 2.0).unwrap();
    let base_zeros: Vec<f64> = bf.zeros().iter().map(|z| z.theta_star).collect();

    let mut pass = true;
    let mut detail = format!("base total {base_total}; ");
    for factor in [-1.0, 7.0] {
        let adj2 = adj.rescaled(factor);
        let bf2 = sample_f(&cycle, &adj2, &spec, 256, 64).unwrap();
        let total = aggregate_degree(&spec, &cycle, &adj2, &bf2, &region).unwrap().total;
        let deg = degree_on_interval(&bf2, PI / 2.0, 3.0 * PI / 2.0).unwrap();
        let zeros: Vec<f64> = bf2.zeros().iter().map(|z| z.theta_star).collect();
        let zeros_ok = zeros.len() == base_zeros.len()
            && zeros
                .iter()
                .zip(&base_zeros)
                .all(|(a, b)| {
                    let d = (a - b).abs();
                    d.min(cycle.period - d) <= 1e-10
                });
        pass &= total == base_total && deg == base_deg && zeros_ok;
        detail.push_str(&format!("factor {factor}: total {total}, interval {deg}, zeros ok {zeros_ok}; "));
    }
    report(11, "scale/sign invariance", pass, &detail);
}

#[test]
fn least_period_data_supports_degree_intervals() {
    // supporting check: the doubled-period analysis reports p = 2, keeping
    // the 0 <= theta1 < theta2 <= theta1 + T/p hypothesis checkable
    let spec = bundled::circle_period(4.0 * PI);
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL).unwrap();
    assert_eq!(cycle.p, 2);
    let norm_ok = norm(&cycle.xi0) - 1.0;
    assert!(norm_ok.abs() <= 1e-8);
}
