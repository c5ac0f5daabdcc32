//! T-periodic solution of the adjoint system z' = -(psi'(x0(t)))^T z and the
//! Perron constant <x0'(t), z0(t)>, which is time-invariant along the cycle
//! and nonzero for nondegenerate cycles.

use crate::cycle::LimitCycle;
use crate::error::{Error, Result};
use crate::ode::{integrate, integrate_adjoint, norm, Trajectory};
use crate::system::SystemSpec;
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct AdjointCycle {
    /// z0 over [0, T], with ||z0(0)|| = 1 and a deterministic sign (first
    /// component above 1e-12 in magnitude is positive).
    pub z_traj: Trajectory,
    /// c = <x0'(0), z0(0)>.
    pub perron_constant: f64,
    /// sign of c; multiplies the bifurcation-function integral so that f is
    /// invariant under z0 -> -z0.
    pub sign_factor: f64,
}

impl AdjointCycle {
    pub fn z(&self, t: f64) -> Vec<f64> {
        self.z_traj.eval_periodic(t)
    }

    /// Same adjoint data with z0 rescaled by `factor` (sign_factor flips with
    /// negative factors). f and all degree data are covariant under positive
    /// rescaling and invariant under the sign flip.
    pub fn rescaled(&self, factor: f64) -> AdjointCycle {
        let m = self.z_traj.times().len();
        let dim = self.z_traj.dim();
        let mut states = Vec::with_capacity(m * dim);
        let mut derivs = Vec::with_capacity(m * dim);
        for i in 0..m {
            states.extend(self.z_traj.node_state(i).iter().map(|v| v * factor));
            derivs.extend(self.z_traj.node_deriv(i).iter().map(|v| v * factor));
        }
        let z_traj = Trajectory::from_nodes(self.z_traj.times().to_vec(), dim, states, derivs);
        AdjointCycle {
            z_traj,
            perron_constant: self.perron_constant * factor,
            sign_factor: (self.perron_constant * factor).signum(),
        }
    }
}

/// Compute z0 by propagating the left multiplier-1 eigenvector of the
/// monodromy: the unit-norm solution of (M^T - I)v = 0 obtained from the
/// smallest singular vector, sign-fixed, then integrated over [0, T].
pub fn periodic_adjoint(spec: &SystemSpec, cycle: &LimitCycle, tol: f64) -> Result<AdjointCycle> {
    let n = spec.n;
    let mt = cycle.monodromy.transpose() - DMatrix::<f64>::identity(n, n);
    let svd = mt.clone().svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let smallest = sv[n - 1];
    let second = if n >= 2 { sv[n - 2] } else { f64::INFINITY };
    let scale = sv[0].max(1.0);
    if n >= 2 && second <= 1e-6 * scale {
        return Err(Error::DegenerateCycle {
            message: format!(
                "left eigenspace for multiplier 1 is not one-dimensional (singular values {smallest:e}, {second:e})"
            ),
        });
    }

    // right singular vector for the smallest singular value of M^T - I
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    // nalgebra sorts singular values in decreasing order; the null direction
    // is the last row of V^T
    let mut v: Vec<f64> = (0..n).map(|j| v_t[(n - 1, j)]).collect();
    let vn = norm(&v);
    for c in v.iter_mut() {
        *c /= vn;
    }
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            for c in v.iter_mut() {
                *c = -*c;
            }
        }
    }

    let adj_tol = (tol * 1e-3).clamp(1e-13, 1e-8);
    let z_traj = propagate_two_sided(spec, cycle, &v, adj_tol)?;

    let xdot0 = spec.eval_psi(&cycle.xi0);
    let c: f64 = xdot0.iter().zip(&v).map(|(a, b)| a * b).sum();
    if c.abs() <= 1e-10 * norm(&xdot0) {
        return Err(Error::DegenerateCycle {
            message: format!("Perron constant <x0'(0), z0(0)> = {c:e} vanishes"),
        });
    }

    Ok(AdjointCycle {
        z_traj,
        perron_constant: c,
        sign_factor: c.signum(),
    })
}

/// z0 over [0, T] stitched from two numerically stable halves.
///
/// For an attracting cycle the adjoint system is anti-stable forward in time:
/// the error of a forward pass grows like the inverse contraction rate, which
/// downstream consumers amplify by the (exponentially large) magnitude of the
/// averaged inverse-variational integrand. The reversed variable
/// w(s) = z0(T - s) integrates the growth away, so [0, T/2] is propagated
/// forward and [T/2, T] through w, with w(0) = z0(T) = z0(0) by periodicity.
fn propagate_two_sided(
    spec: &SystemSpec,
    cycle: &LimitCycle,
    v: &[f64],
    adj_tol: f64,
) -> Result<Trajectory> {
    let n = spec.n;
    let period = cycle.period;
    let half = 0.5 * period;
    let fwd = integrate_adjoint(spec, &cycle.trajectory, v, (0.0, half), adj_tol)?;

    let cycle_traj = &cycle.trajectory;
    let mut s = crate::system::EvalScratch::default();
    let mut xbuf = vec![0.0; n];
    let mut jbuf = vec![0.0; n * n];
    let reversed_rhs = move |sv: f64, w: &[f64], out: &mut [f64]| {
        cycle_traj.eval_into(period - sv, &mut xbuf);
        spec.eval_psi_jac_into(&xbuf, &mut jbuf, &mut s);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += jbuf[j * n + i] * w[j];
            }
            out[i] = acc;
        }
    };
    let bwd = integrate(reversed_rhs, v, (0.0, half), adj_tol)?;

    let mut ts: Vec<f64> = fwd.times().to_vec();
    let mut states = Vec::new();
    let mut derivs = Vec::new();
    for i in 0..fwd.times().len() {
        states.extend_from_slice(fwd.node_state(i));
        derivs.extend_from_slice(fwd.node_deriv(i));
    }
    // reversed half: t = T - s, z(t) = w(s), dz/dt = -dw/ds
    let m = bwd.times().len();
    for i in (0..m).rev() {
        let t = period - bwd.times()[i];
        if t <= *ts.last().unwrap() {
            continue;
        }
        ts.push(t);
        states.extend_from_slice(bwd.node_state(i));
        derivs.extend(bwd.node_deriv(i).iter().map(|d| -d));
    }
    Ok(Trajectory::from_nodes(ts, n, states, derivs))
}

/// Health metric: max over 256 uniform sample times of
/// |<x0'(t), z0(t)> - c| / |c|.
pub fn perron_residual(cycle: &LimitCycle, adj: &AdjointCycle) -> f64 {
    let c = adj.perron_constant;
    let mut worst = 0.0f64;
    for i in 0..256 {
        let t = cycle.period * i as f64 / 256.0;
        let xdot = cycle.velocity(t);
        let z = adj.z(t);
        let ip: f64 = xdot.iter().zip(&z).map(|(a, b)| a * b).sum();
        worst = worst.max((ip - c).abs() / c.abs());
    }
    worst
}
