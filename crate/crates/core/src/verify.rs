//! Direct numerical confirmation of the degree predictions: T-periodic
//! solutions of the perturbed system by Newton on the time-T map, distance to
//! the unperturbed cycle, and convergence-rate fits over eps sweeps.

use crate::cycle::LimitCycle;
use crate::degree::DegreeReport;
use crate::error::{Error, Result};
use crate::malkin::{BifurcationFunction, ZeroKind};
use crate::ode::{flow_with_variational_perturbed, norm, Trajectory};
use crate::system::SystemSpec;
use nalgebra::DVector;

/// A converged fixed point of the perturbed time-T map.
#[derive(Debug, Clone)]
pub struct PerturbedOrbit {
    pub eps: f64,
    pub xi: Vec<f64>,
    /// ||x_eps(T, xi) - xi||.
    pub residual: f64,
    /// Phase of the nearest point of the unperturbed cycle to xi.
    pub theta_hat: f64,
    /// Max over t of the distance from x_eps(t) to the cycle curve.
    pub sup_distance: f64,
    pub trajectory: Trajectory,
}

/// Result of halving eps repeatedly and recording orbit distances.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub eps: Vec<f64>,
    pub sup_distance: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// Least-squares slope of log sup_distance vs log eps.
    pub slope: f64,
    /// RMS residual of the log-log fit.
    pub slope_residual: f64,
    /// Set when later eps values failed; the completed prefix is retained.
    pub failed: Option<(f64, Box<Error>)>,
}

fn nearest_phase(cycle: &LimitCycle, point: &[f64]) -> f64 {
    let traj = &cycle.trajectory;
    let m = traj.times().len();
    let dist2 = |s: f64| -> f64 {
        let p = traj.eval_periodic(s);
        p.iter()
            .zip(point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..m {
        let st = traj.node_state(i);
        let d: f64 = st
            .iter()
            .zip(point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best {
            best = d;
            best_i = i;
        }
    }
    // golden-section refinement around the best node
    let ts = traj.times();
    let period = cycle.period;
    let t_center = ts[best_i];
    let half = if m > 1 {
        (ts[1] - ts[0]).max(period / m as f64) * 2.0
    } else {
        period / 2.0
    };
    let (mut lo, mut hi) = (t_center - half, t_center + half);
    let phi_r = 0.5 * (3.0 - 5.0f64.sqrt());
    let mut x1 = lo + phi_r * (hi - lo);
    let mut x2 = hi - phi_r * (hi - lo);
    let mut f1 = dist2(x1);
    let mut f2 = dist2(x2);
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = lo + phi_r * (hi - lo);
            f1 = dist2(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = hi - phi_r * (hi - lo);
            f2 = dist2(x2);
        }
    }
    (0.5 * (lo + hi)).rem_euclid(period)
}

fn distance_to_cycle(cycle: &LimitCycle, point: &[f64]) -> f64 {
    let s = nearest_phase(cycle, point);
    let p = cycle.point(s);
    let d: Vec<f64> = p.iter().zip(point).map(|(a, b)| a - b).collect();
    norm(&d)
}

/// Distance profile of the perturbed orbit against the cycle curve,
/// sampled at 512 points (nearest-point projection, no phase alignment).
fn sup_distance(cycle: &LimitCycle, orbit_traj: &Trajectory, period: f64) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..512 {
        let t = period * j as f64 / 512.0;
        let p = orbit_traj.eval(t.min(orbit_traj.t_end()));
        worst = worst.max(distance_to_cycle(cycle, &p));
    }
    worst
}

fn solve_perturbed(
    spec: &SystemSpec,
    seed: &[f64],
    eps: f64,
    tol: f64,
) -> Result<(Vec<f64>, Trajectory, f64)> {
    let n = spec.n;
    let period = spec.period;
    let int_tol = (tol * 1e-2).clamp(1e-13, 1e-6);
    let mut xi = seed.to_vec();
    let mut last_res = f64::INFINITY;

    for _ in 0..50 {
        let flow = flow_with_variational_perturbed(spec, &xi, period, eps, int_tol)?;
        let r: Vec<f64> = flow.endpoint.iter().zip(&xi).map(|(a, b)| a - b).collect();
        let res = norm(&r);
        if res <= tol * (1.0 + norm(&xi)) {
            let traj_tol = (tol * 1e-3).clamp(1e-13, 1e-8);
            let flow = flow_with_variational_perturbed(spec, &xi, period, eps, traj_tol)?;
            let r: Vec<f64> = flow.endpoint.iter().zip(&xi).map(|(a, b)| a - b).collect();
            return Ok((xi, flow.trajectory, norm(&r)));
        }

        // I - M_eps must be well-conditioned for the fixed-point Newton step
        let mut jac = flow.variational.clone();
        for i in 0..n {
            jac[(i, i)] -= 1.0;
        }
        let svd = jac.clone().svd(false, false);
        let smax = svd.singular_values.iter().fold(0.0f64, |a, b| a.max(*b));
        let smin = svd.singular_values.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        if smin <= 0.0 || !smin.is_finite() || smax / smin > 1e12 {
            return Err(Error::SingularJacobian {
                condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
            });
        }

        let g = DVector::from_column_slice(&r);
        let delta = match jac.lu().solve(&(-g)) {
            Some(d) => d,
            None => {
                return Err(Error::SingularJacobian {
                    condition: f64::INFINITY,
                })
            }
        };

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=8 {
            let trial: Vec<f64> = xi
                .iter()
                .zip(delta.iter())
                .map(|(a, d)| a + lambda * d)
                .collect();
            let flow_t = flow_with_variational_perturbed(spec, &trial, period, eps, int_tol)?;
            let rt: Vec<f64> = flow_t
                .endpoint
                .iter()
                .zip(&trial)
                .map(|(a, b)| a - b)
                .collect();
            if norm(&rt) < res {
                accepted = Some(trial);
                break;
            }
            lambda *= 0.5;
        }
        xi = accepted.unwrap_or_else(|| {
            xi.iter()
                .zip(delta.iter())
                .map(|(a, d)| a + lambda * d)
                .collect()
        });
        last_res = res;
    }
    Err(Error::NoConvergence {
        iterations: 50,
        residual: last_res,
    })
}

/// Newton on xi -> x_eps(T, xi) - xi seeded at the cycle point x0(theta0).
///
/// At eps = 0 the time-T map is degenerate along the cycle, so that case is
/// accepted as a residual check of the unperturbed fixed point rather than a
/// Newton solve.
pub fn find_perturbed_orbit(
    spec: &SystemSpec,
    cycle: &LimitCycle,
    theta0: f64,
    eps: f64,
    tol: f64,
) -> Result<PerturbedOrbit> {
    assert!((0.0..=0.1).contains(&eps), "eps out of range [0, 0.1]");
    let seed = cycle.point(theta0);
    let (xi, trajectory, residual) = if eps == 0.0 {
        let traj_tol = (tol * 1e-3).clamp(1e-13, 1e-8);
        let flow = flow_with_variational_perturbed(spec, &seed, spec.period, 0.0, traj_tol)?;
        let r: Vec<f64> = flow.endpoint.iter().zip(&seed).map(|(a, b)| a - b).collect();
        (seed.clone(), flow.trajectory, norm(&r))
    } else {
        solve_perturbed(spec, &seed, eps, tol)?
    };
    let theta_hat = nearest_phase(cycle, &xi);
    let sup = sup_distance(cycle, &trajectory, spec.period);
    Ok(PerturbedOrbit {
        eps,
        xi,
        residual,
        theta_hat,
        sup_distance: sup,
        trajectory,
    })
}

/// Run `find_perturbed_orbit` along eps0 * 2^{-k}, k = 0..halvings, warm
/// starting each solve from the previous orbit, and fit the log-log slope of
/// sup_distance against eps.
pub fn epsilon_sweep(
    spec: &SystemSpec,
    cycle: &LimitCycle,
    theta0: f64,
    eps0: f64,
    halvings: usize,
    tol: f64,
) -> Result<SweepReport> {
    assert!((4..=12).contains(&halvings), "halvings out of range [4, 12]");
    assert!(eps0 > 0.0 && eps0 <= 1e-2, "eps0 out of range (0, 1e-2]");

    let mut eps_vals = Vec::new();
    let mut sups = Vec::new();
    let mut thetas = Vec::new();
    let mut failed = None;
    let mut seed = cycle.point(theta0);

    for k in 0..=halvings {
        let eps = eps0 * 0.5f64.powi(k as i32);
        match solve_perturbed(spec, &seed, eps, tol) {
            Ok((xi, traj, _res)) => {
                let sup = sup_distance(cycle, &traj, spec.period);
                eps_vals.push(eps);
                sups.push(sup);
                thetas.push(nearest_phase(cycle, &xi));
                seed = xi;
            }
            Err(e) => {
                if eps_vals.is_empty() {
                    return Err(e);
                }
                failed = Some((eps, Box::new(e)));
                break;
            }
        }
    }

    // least-squares slope of log sup vs log eps
    let pairs: Vec<(f64, f64)> = eps_vals
        .iter()
        .zip(&sups)
        .filter(|(_, s)| **s > 0.0)
        .map(|(e, s)| (e.ln(), s.ln()))
        .collect();
    let (slope, slope_residual) = if pairs.len() >= 2 {
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let rss: f64 = pairs
            .iter()
            .map(|p| {
                let pred = my + slope * (p.0 - mx);
                (p.1 - pred) * (p.1 - pred)
            })
            .sum();
        (slope, (rss / n).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(SweepReport {
        eps: eps_vals,
        sup_distance: sups,
        theta_hat: thetas,
        slope,
        slope_residual,
        failed,
    })
}

/// Applicability verdicts for the existence results, with witnessing data.
#[derive(Debug, Clone)]
pub struct ConditionSummary {
    /// Nonzero aggregate degree forces a T-periodic solution in the region.
    pub degree_existence: DegreeVerdict,
    /// Same-sign f at contact endpoints plus nonzero field degree.
    pub same_sign_route: SameSignVerdict,
    /// Sign-change brackets of f, each forcing an orbit near the cycle.
    pub sign_change_brackets: Vec<SignChangeBracket>,
    /// Zeros certified by sign change (simple/odd-order zero criteria).
    pub certified_zeros: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DegreeVerdict {
    pub applies: bool,
    pub total: i64,
}

#[derive(Debug, Clone)]
pub struct SameSignVerdict {
    pub applies: bool,
    pub d_psi: i64,
    /// (contact phase, f at entry, f at exit) for each entering contact.
    pub contacts: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SignChangeBracket {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

/// Structured verdicts: which existence routes apply for this bifurcation
/// function and degree report. Monotone/odd-order zero conditions are
/// certified through sign-change brackets, not differentiation.
pub fn check_existence_conditions(
    bf: &BifurcationFunction,
    report: &DegreeReport,
) -> Result<ConditionSummary> {
    let degree_existence = DegreeVerdict {
        applies: report.total != 0,
        total: report.total,
    };

    let mut contacts = Vec::new();
    let mut all_same_sign = true;
    for c in &report.contributions {
        if let Some(theta_exit) = c.theta_exit {
            let f_entry = bf.eval(c.phase)?;
            let f_exit = bf.eval(c.phase + theta_exit)?;
            if f_entry * f_exit <= 0.0 {
                all_same_sign = false;
            }
            contacts.push((c.phase, f_entry, f_exit));
        }
    }
    let same_sign_route = SameSignVerdict {
        applies: all_same_sign && report.d_psi != 0,
        d_psi: report.d_psi,
        contacts,
    };

    let mut sign_change_brackets = Vec::new();
    let mut certified_zeros = Vec::new();
    for z in bf.zeros() {
        if z.kind == ZeroKind::SignChange {
            let f_lo = bf.eval(z.bracket.0)?;
            let f_hi = bf.eval(z.bracket.1)?;
            sign_change_brackets.push(SignChangeBracket {
                theta_lo: z.bracket.0,
                theta_hi: z.bracket.1,
                f_lo,
                f_hi,
            });
            certified_zeros.push(z.theta_star);
        }
    }

    Ok(ConditionSummary {
        degree_existence,
        same_sign_route,
        sign_change_brackets,
        certified_zeros,
    })
}
