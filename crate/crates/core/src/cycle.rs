//! Limit-cycle location by Newton shooting with a coordinate-section phase
//! condition, plus Floquet data: monodromy matrix, characteristic multipliers
//! and the parity datum beta.

use crate::error::{Error, Result};
use crate::ode::{flow_with_variational, integrate, integrate_endpoint, norm, Trajectory};
use crate::system::{EvalScratch, SystemSpec};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Phase condition: the cycle's initial point is pinned to the hyperplane
/// `x_coord = value`, crossed in `direction` (+1 means the coordinate is
/// increasing at the crossing).
#[derive(Debug, Clone, Copy)]
pub struct Section {
    /// 1-based coordinate index, matching `x1..xn` naming.
    pub coord: usize,
    pub value: f64,
    pub direction: i8,
}

impl Section {
    fn index(&self, n: usize) -> usize {
        assert!(
            self.coord >= 1 && self.coord <= n,
            "section coordinate out of range"
        );
        self.coord - 1
    }
}

/// A nondegenerate T-periodic limit cycle with its Floquet data.
#[derive(Debug, Clone)]
pub struct LimitCycle {
    pub xi0: Vec<f64>,
    /// Analysis period T; the least period is T/p.
    pub period: f64,
    pub p: u32,
    pub trajectory: Trajectory,
    pub monodromy: DMatrix<f64>,
    pub multipliers: Vec<Complex64>,
    pub trivial_index: usize,
    pub beta: u32,
    pub nondegenerate: bool,
}

impl LimitCycle {
    /// State on the cycle at phase `s` (wrapped into [0, T]).
    pub fn point(&self, s: f64) -> Vec<f64> {
        self.trajectory.eval_periodic(s)
    }

    /// Velocity on the cycle at phase `s`.
    pub fn velocity(&self, s: f64) -> Vec<f64> {
        let span = self.period;
        let tr = s.rem_euclid(span);
        self.trajectory.eval_deriv(tr)
    }
}

/// Multiplier classification of a monodromy matrix.
#[derive(Debug, Clone)]
pub struct MultiplierData {
    pub multipliers: Vec<Complex64>,
    pub trivial_index: usize,
    pub beta: u32,
    pub nondegenerate: bool,
}

/// Eigenvalues of the monodromy with the trivial multiplier identified, the
/// nondegeneracy flag, and beta.
///
/// beta counts real multipliers greater than 1 (with multiplicity) plus 2 for
/// every complex pair of modulus greater than 1; its parity is then checked
/// against the sign of det(I - M~) on the complement of the trivial
/// eigendirection, which is the authoritative definition: the returned beta
/// always satisfies (-1)^beta = sign det(I - M~).
pub fn multipliers_and_beta(monodromy: &DMatrix<f64>, mult_tol: f64) -> Result<MultiplierData> {
    assert!(monodromy.iter().all(|v| v.is_finite()));
    let n = monodromy.nrows();
    let eigs = monodromy.clone().complex_eigenvalues();
    let multipliers: Vec<Complex64> = eigs.iter().copied().collect();

    let trivial_index = multipliers
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (*a - Complex64::new(1.0, 0.0)).norm();
            let db = (*b - Complex64::new(1.0, 0.0)).norm();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap_or(0);

    let near_one = multipliers
        .iter()
        .filter(|l| (**l - Complex64::new(1.0, 0.0)).norm() <= mult_tol)
        .count();
    if near_one >= 2 {
        return Err(Error::DegenerateCycle {
            message: format!(
                "characteristic multiplier 1 has multiplicity {near_one} (tolerance {mult_tol:e})"
            ),
        });
    }
    let nondegenerate = near_one == 1;

    let mut beta: u32 = 0;
    for (i, l) in multipliers.iter().enumerate() {
        if i == trivial_index {
            continue;
        }
        let real = l.im.abs() <= mult_tol * (1.0 + l.norm());
        if real {
            if l.re > 1.0 + mult_tol {
                beta += 1;
            }
        } else if l.norm() > 1.0 + mult_tol {
            beta += 1; // each member of a conjugate pair counts once
        }
    }

    // determinant-sign check on the deflated complement: prod_{i != trivial} (1 - lambda_i)
    if n >= 2 {
        let mut prod = Complex64::new(1.0, 0.0);
        for (i, l) in multipliers.iter().enumerate() {
            if i != trivial_index {
                prod *= Complex64::new(1.0, 0.0) - l;
            }
        }
        let det_sign = if prod.re >= 0.0 { 1i32 } else { -1i32 };
        let beta_sign = if beta.is_multiple_of(2) { 1 } else { -1 };
        if det_sign != beta_sign && prod.re.abs() > 1e-12 {
            beta += 1;
        }
    }

    Ok(MultiplierData {
        multipliers,
        trivial_index,
        beta,
        nondegenerate,
    })
}

fn residual_norm(spec: &SystemSpec, xi: &[f64], period: f64, tol: f64) -> Result<f64> {
    if period == 0.0 {
        return Ok(0.0);
    }
    let mut s = EvalScratch::default();
    let endpoint = integrate_endpoint(
        |_t: f64, x: &[f64], out: &mut [f64]| {
            spec.eval_psi_into(x, out, &mut s);
        },
        xi,
        (0.0, period),
        tol,
    )?;
    let r: Vec<f64> = endpoint.iter().zip(xi).map(|(a, b)| a - b).collect();
    Ok(norm(&r))
}

fn integration_tol(tol: f64) -> f64 {
    (tol * 1e-2).clamp(1e-13, 1e-6)
}

/// Tolerance used for the final dense cycle trajectory, which downstream
/// quadratures interpolate heavily.
fn trajectory_tol(tol: f64) -> f64 {
    (tol * 1e-3).clamp(1e-13, 1e-8)
}

/// Newton iteration for a fixed point of the time-T flow map with the phase
/// pinned by the section. Damping halves the step up to 8 times when the
/// residual does not decrease.
fn shoot_fixed_period(
    spec: &SystemSpec,
    seed: &[f64],
    section: Section,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = spec.n;
    let k = section.index(n);
    let period = spec.period;
    let int_tol = integration_tol(tol);

    let mut xi = seed.to_vec();
    xi[k] = section.value;
    let mut last_res = f64::INFINITY;

    for _iter in 0..50 {
        let flow = flow_with_variational(spec, &xi, period, int_tol)?;
        let r: Vec<f64> = flow.endpoint.iter().zip(&xi).map(|(a, b)| a - b).collect();
        let res = norm(&r);
        if res <= tol * (1.0 + norm(&xi)) {
            return Ok(xi);
        }

        // G_i = r_i for i != k, G_k = xi_k - value (held at 0); rows of the
        // Jacobian are (M - I) with row k replaced by e_k
        let mut jac = flow.variational.clone();
        for i in 0..n {
            jac[(i, i)] -= 1.0;
        }
        let mut g = DVector::from_column_slice(&r);
        for j in 0..n {
            jac[(k, j)] = if j == k { 1.0 } else { 0.0 };
        }
        g[k] = xi[k] - section.value;

        let lu = jac.lu();
        let delta = match lu.solve(&(-g)) {
            Some(d) => d,
            None => {
                return Err(Error::NoConvergence {
                    iterations: _iter,
                    residual: res,
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
            let trial_res = residual_norm(spec, &trial, period, int_tol)?;
            if trial_res < res {
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

fn check_section_transversal(
    spec: &SystemSpec,
    xi: &[f64],
    section: Section,
) -> Result<()> {
    let k = section.index(spec.n);
    let v = spec.eval_psi(xi);
    let speed = norm(&v);
    if speed <= 1e-10 {
        return Err(Error::SectionMiss {
            message: format!("converged point {xi:?} is an equilibrium, not a cycle"),
        });
    }
    if v[k].abs() <= 1e-8 * speed {
        return Err(Error::SectionMiss {
            message: format!(
                "orbit is tangent to the section x{} = {} at {xi:?}",
                section.coord, section.value
            ),
        });
    }
    if section.direction != 0 && (v[k] * section.direction as f64) < 0.0 {
        return Err(Error::SectionMiss {
            message: format!(
                "orbit crosses the section opposite to direction {}",
                section.direction
            ),
        });
    }
    Ok(())
}

fn build_cycle(
    spec: &SystemSpec,
    xi: Vec<f64>,
    mult_tol: f64,
    tol: f64,
) -> Result<LimitCycle> {
    let period = spec.period;
    let flow = flow_with_variational(spec, &xi, period, trajectory_tol(tol))?;
    let data = multipliers_and_beta(&flow.variational, mult_tol)?;
    if !data.nondegenerate {
        return Err(Error::DegenerateCycle {
            message: "no characteristic multiplier within tolerance of 1".into(),
        });
    }
    let p = least_period_divisor_from(&flow.trajectory, &xi, tol.max(1e-9));
    Ok(LimitCycle {
        xi0: xi,
        period,
        p,
        trajectory: flow.trajectory,
        monodromy: flow.variational,
        multipliers: data.multipliers,
        trivial_index: data.trivial_index,
        beta: data.beta,
        nondegenerate: data.nondegenerate,
    })
}

/// Find a nondegenerate T-periodic limit cycle of x' = psi(x) with T fixed by
/// `spec.period`, starting from `seed`.
pub fn find_cycle(
    spec: &SystemSpec,
    seed: &[f64],
    section: Section,
    tol: f64,
    mult_tol: f64,
) -> Result<LimitCycle> {
    let xi = shoot_fixed_period(spec, seed, section, tol)?;
    check_section_transversal(spec, &xi, section)?;
    build_cycle(spec, xi, mult_tol, tol)
}

/// All upward/downward crossings of the section along a trajectory, in time
/// order, skipping a leading interval so a start on the section is ignored.
fn section_crossings(
    traj: &Trajectory,
    k: usize,
    value: f64,
    direction: i8,
    skip_until: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    let ts = traj.times();
    let gval = |t: f64| traj.eval(t)[k] - value;
    let mut grid = Vec::new();
    for w in ts.windows(2) {
        for q in 0..4 {
            grid.push(w[0] + (w[1] - w[0]) * q as f64 / 4.0);
        }
    }
    grid.push(*ts.last().unwrap());
    let span = traj.t_end() - traj.t_start();
    for w in grid.windows(2) {
        if w[0] < skip_until {
            continue;
        }
        let (glo, ghi) = (gval(w[0]), gval(w[1]));
        let crossing = match direction {
            1 => glo < 0.0 && ghi >= 0.0,
            -1 => glo > 0.0 && ghi <= 0.0,
            _ => (glo < 0.0) != (ghi < 0.0),
        };
        if crossing {
            let (mut lo, mut hi) = (w[0], w[1]);
            let mut flo = glo;
            for _ in 0..80 {
                if hi - lo <= 1e-13 * span {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let fm = gval(mid);
                if (fm < 0.0) == (flo < 0.0) && fm != 0.0 {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
    }
    out
}

/// Find a limit cycle when the period is unknown: seed (xi, T) from section
/// return times and run an augmented Newton iteration on both. The converged
/// T is the first-return time to the section, i.e. the least period.
pub fn period_solve(
    spec: &SystemSpec,
    seed: &[f64],
    section: Section,
    tol: f64,
    mult_tol: f64,
) -> Result<LimitCycle> {
    let n = spec.n;
    let k = section.index(n);
    let int_tol = integration_tol(tol);

    // transient integration until at least three section returns are seen
    let mut horizon = 16.0;
    let (mut xi, mut period) = loop {
        let mut s = EvalScratch::default();
        let mut buf = vec![0.0; n];
        let traj = integrate(
            |_t: f64, x: &[f64], out: &mut [f64]| {
                spec.eval_psi_into(x, &mut buf, &mut s);
                out.copy_from_slice(&buf);
            },
            seed,
            (0.0, horizon),
            int_tol,
        )?;
        let crossings = section_crossings(&traj, k, section.value, section.direction, 1e-9);
        if crossings.len() >= 3 {
            let m = crossings.len();
            let t_ret = crossings[m - 1];
            break (traj.eval(t_ret), t_ret - crossings[m - 2]);
        }
        horizon *= 2.0;
        if horizon > 4096.0 {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
    };
    xi[k] = section.value;

    // augmented Newton on (xi, T)
    let mut last_res = f64::INFINITY;
    let mut converged = false;
    for _iter in 0..50 {
        let spec_t = spec.with_period(period)?;
        let flow = flow_with_variational(&spec_t, &xi, period, int_tol)?;
        let r: Vec<f64> = flow.endpoint.iter().zip(&xi).map(|(a, b)| a - b).collect();
        let res = norm(&r);
        if res <= tol * (1.0 + norm(&xi)) {
            converged = true;
            break;
        }

        let mut jac = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] = flow.variational[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
        }
        let vel = spec.eval_psi(&flow.endpoint);
        for i in 0..n {
            jac[(i, n)] = vel[i];
        }
        jac[(n, k)] = 1.0;
        let mut g = DVector::zeros(n + 1);
        for i in 0..n {
            g[i] = r[i];
        }
        g[n] = xi[k] - section.value;

        let lu = jac.lu();
        let delta = match lu.solve(&(-g)) {
            Some(d) => d,
            None => {
                return Err(Error::NoConvergence {
                    iterations: _iter,
                    residual: res,
                })
            }
        };

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=8 {
            let trial_xi: Vec<f64> = (0..n).map(|i| xi[i] + lambda * delta[i]).collect();
            let trial_t = period + lambda * delta[n];
            if trial_t > 0.0 {
                let trial_res = residual_norm(spec, &trial_xi, trial_t, int_tol)?;
                if trial_res < res {
                    accepted = Some((trial_xi, trial_t));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((x, t)) => {
                xi = x;
                period = t;
            }
            None => {
                let trial_t = period + lambda * delta[n];
                xi = (0..n).map(|i| xi[i] + lambda * delta[i]).collect();
                if trial_t > 0.0 {
                    period = trial_t;
                }
            }
        }
        last_res = res;
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: 50,
            residual: last_res,
        });
    }

    let spec_t = spec.with_period(period)?;
    check_section_transversal(&spec_t, &xi, section)?;
    build_cycle(&spec_t, xi, mult_tol, tol)
}

fn least_period_divisor_from(traj: &Trajectory, xi0: &[f64], tol: f64) -> u32 {
    let period = traj.t_end() - traj.t_start();
    let scale = tol * (1.0 + norm(xi0));
    for p in (2..=64u32).rev() {
        let pt = traj.eval(traj.t_start() + period / p as f64);
        let d: Vec<f64> = pt.iter().zip(xi0).map(|(a, b)| a - b).collect();
        if norm(&d) <= scale {
            return p;
        }
    }
    1
}

/// Largest integer p <= 64 such that x(T/p, xi0) returns to xi0 within
/// tolerance; 1 if none does.
pub fn least_period_divisor(cycle: &LimitCycle, tol: f64) -> u32 {
    least_period_divisor_from(&cycle.trajectory, &cycle.xi0, tol)
}
