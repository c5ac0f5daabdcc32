//! Adaptive Dormand-Prince 5(4) integration with cubic-Hermite dense output,
//! variational flows, adjoint propagation and event location.

use crate::error::{Error, Result};
use crate::system::{EvalScratch, SystemSpec};
use nalgebra::DMatrix;

// Dormand-Prince 5(4) tableau. b5 is the 5th-order solution (FSAL: its last
// stage is the derivative at the accepted point), b4 the embedded 4th-order
// weights for error estimation.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Dense solution on a grid of accepted steps. States are interpolated by
/// cubic Hermite polynomials from the stored node states and derivatives, so
/// evaluation at a grid node reproduces the stored state exactly.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    ts: Vec<f64>,
    states: Vec<f64>, // (m+1) * dim, node-major
    derivs: Vec<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.ts[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.ts
    }

    pub fn node_state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    /// Single-node trajectory (zero-length time span).
    pub fn single(t: f64, state: Vec<f64>, deriv: Vec<f64>) -> Self {
        let dim = state.len();
        Trajectory {
            dim,
            ts: vec![t],
            states: state,
            derivs: deriv,
        }
    }

    /// Assemble from explicit node data (flattened node-major states and
    /// derivatives); times must be strictly increasing.
    pub fn from_nodes(ts: Vec<f64>, dim: usize, states: Vec<f64>, derivs: Vec<f64>) -> Self {
        assert_eq!(states.len(), ts.len() * dim);
        assert_eq!(derivs.len(), ts.len() * dim);
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        Trajectory {
            dim,
            ts,
            states,
            derivs,
        }
    }

    fn segment(&self, t: f64) -> usize {
        // index i with ts[i] <= t <= ts[i+1]
        let m = self.ts.len();
        let i = self.ts.partition_point(|&u| u <= t);
        i.clamp(1, m - 1) - 1
    }

    /// Cubic Hermite interpolation; `t` is clamped to the stored span.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let m = self.ts.len();
        if m == 1 {
            out.copy_from_slice(self.node_state(0));
            return;
        }
        let t = t.clamp(self.ts[0], self.ts[m - 1]);
        let i = self.segment(t);
        if t == self.ts[i] {
            out.copy_from_slice(self.node_state(i));
            return;
        }
        if t == self.ts[i + 1] {
            out.copy_from_slice(self.node_state(i + 1));
            return;
        }
        let h = self.ts[i + 1] - self.ts[i];
        let s = (t - self.ts[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let x0 = self.node_state(i);
        let x1 = self.node_state(i + 1);
        let f0 = self.node_deriv(i);
        let f1 = self.node_deriv(i + 1);
        for k in 0..self.dim {
            out[k] = h00 * x0[k] + h * h10 * f0[k] + h01 * x1[k] + h * h11 * f1[k];
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Derivative of the Hermite interpolant (exact node derivatives at nodes).
    pub fn eval_deriv_into(&self, t: f64, out: &mut [f64]) {
        let m = self.ts.len();
        if m == 1 {
            out.copy_from_slice(self.node_deriv(0));
            return;
        }
        let t = t.clamp(self.ts[0], self.ts[m - 1]);
        let i = self.segment(t);
        if t == self.ts[i] {
            out.copy_from_slice(self.node_deriv(i));
            return;
        }
        if t == self.ts[i + 1] {
            out.copy_from_slice(self.node_deriv(i + 1));
            return;
        }
        let h = self.ts[i + 1] - self.ts[i];
        let s = (t - self.ts[i]) / h;
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (6.0 * s - 6.0 * s2) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let x0 = self.node_state(i);
        let x1 = self.node_state(i + 1);
        let f0 = self.node_deriv(i);
        let f1 = self.node_deriv(i + 1);
        for k in 0..self.dim {
            out[k] = d00 * x0[k] + d10 * f0[k] + d01 * x1[k] + d11 * f1[k];
        }
    }

    pub fn eval_deriv(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_deriv_into(t, &mut out);
        out
    }

    /// Evaluate treating the stored span as one period (times wrap).
    pub fn eval_periodic_into(&self, t: f64, out: &mut [f64]) {
        let span = self.t_end() - self.t_start();
        if span <= 0.0 {
            out.copy_from_slice(self.node_state(0));
            return;
        }
        let tr = self.t_start() + (t - self.t_start()).rem_euclid(span);
        self.eval_into(tr, out);
    }

    pub fn eval_periodic(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_periodic_into(t, &mut out);
        out
    }

    /// Copy of the trajectory restricted to the leading `dim` components
    /// (used to project augmented variational states back to x).
    pub fn project(&self, dim: usize) -> Trajectory {
        assert!(dim <= self.dim);
        let m = self.ts.len();
        let mut states = Vec::with_capacity(m * dim);
        let mut derivs = Vec::with_capacity(m * dim);
        for i in 0..m {
            states.extend_from_slice(&self.node_state(i)[..dim]);
            derivs.extend_from_slice(&self.node_deriv(i)[..dim]);
        }
        Trajectory {
            dim,
            ts: self.ts.clone(),
            states,
            derivs,
        }
    }
}

/// Core adaptive DP5(4) stepper. `on_node` is invoked at every accepted node
/// (including the initial point) with `(t, state, derivative)`; the final
/// state is returned.
fn dp5_drive<F, C>(
    mut rhs: F,
    x0: &[f64],
    t_span: (f64, f64),
    tol: f64,
    mut on_node: C,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    C: FnMut(f64, &[f64], &[f64]),
{
    let (ta, tb) = t_span;
    assert!(ta < tb, "integrate requires t_a < t_b");
    assert!((1e-13..=1e-3).contains(&tol), "tol out of range [1e-13, 1e-3]");
    let dim = x0.len();
    let span = tb - ta;
    let h_min = 1e-14 * span;

    let mut t = ta;
    let mut x = x0.to_vec();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut stage = vec![0.0; dim];
    let mut x5 = vec![0.0; dim];

    if !x.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFiniteState { t });
    }
    rhs(t, &x, &mut k[0]);
    if !k[0].iter().all(|c| c.is_finite()) {
        return Err(Error::NonFiniteState { t });
    }
    on_node(t, &x, &k[0]);

    // initial step heuristic
    let d0 = rms_scaled(&x, &x, 1.0);
    let d1 = rms_scaled(&k[0], &x, 1.0);
    let mut h = if d1 > 1e-10 {
        0.01 * (d0.max(1e-4)) / d1
    } else {
        span / 100.0
    };
    h = h.clamp(h_min.max(1e-10 * span), span / 10.0).min(span);

    loop {
        // rounding can leave t a few ulp short of tb after the last step
        if tb - t <= h_min {
            break;
        }
        if h < h_min {
            return Err(Error::StepSizeUnderflow { t });
        }
        if t + h > tb {
            h = tb - t;
        }

        // stages 1..6 (k[0] is FSAL from the previous step)
        for s in 1..7 {
            for (j, v) in stage.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (l, kl) in k.iter().enumerate().take(s) {
                    let a = A[s][l];
                    if a != 0.0 {
                        acc += a * kl[j];
                    }
                }
                *v = x[j] + h * acc;
            }
            rhs(t + C[s] * h, &stage, &mut k[s]);
        }

        // 5th order solution; k[6] = f(t+h, x5) thanks to FSAL
        for j in 0..dim {
            let mut acc = 0.0;
            for (l, kl) in k.iter().enumerate() {
                if B5[l] != 0.0 {
                    acc += B5[l] * kl[j];
                }
            }
            x5[j] = x[j] + h * acc;
        }

        if !x5.iter().all(|c| c.is_finite()) || !k.iter().all(|kl| kl.iter().all(|c| c.is_finite()))
        {
            // retry with a smaller step before giving up
            h *= 0.25;
            if h < h_min {
                return Err(Error::NonFiniteState { t });
            }
            continue;
        }

        // scaled error estimate against tol * (1 + |x|)
        let mut err = 0.0f64;
        for j in 0..dim {
            let mut e = 0.0;
            for (l, kl) in k.iter().enumerate() {
                let d = B5[l] - B4[l];
                if d != 0.0 {
                    e += d * kl[j];
                }
            }
            e *= h;
            let sc = tol * (1.0 + x[j].abs().max(x5[j].abs()));
            err += (e / sc) * (e / sc);
        }
        err = (err / dim as f64).sqrt();

        if err <= 1.0 {
            t += h;
            std::mem::swap(&mut x, &mut x5);
            // FSAL: derivative at the new point is k[6]
            k.swap(0, 6);
            on_node(t, &x, &k[0]);
        }

        let scale = if err > 0.0 {
            0.9 * err.powf(-0.2)
        } else {
            5.0
        };
        h *= scale.clamp(0.2, 5.0);
    }

    Ok(x)
}

/// Adaptive DP5(4) integration of `rhs` from `x0` over `t_span` with dense
/// output on the accepted steps.
///
/// Local error per step is controlled against `tol * (1 + |x|)` component-wise.
pub fn integrate<F>(rhs: F, x0: &[f64], t_span: (f64, f64), tol: f64) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = x0.len();
    let mut ts = Vec::new();
    let mut states = Vec::new();
    let mut derivs = Vec::new();
    dp5_drive(rhs, x0, t_span, tol, |t, x, f| {
        ts.push(t);
        states.extend_from_slice(x);
        derivs.extend_from_slice(f);
    })?;
    Ok(Trajectory {
        dim,
        ts,
        states,
        derivs,
    })
}

/// Endpoint-only integration (no dense storage); used in inner loops such as
/// boundary winding maps and Newton residual probes.
pub fn integrate_endpoint<F>(rhs: F, x0: &[f64], t_span: (f64, f64), tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    dp5_drive(rhs, x0, t_span, tol, |_, _, _| {})
}

/// Result of integrating the flow together with its derivative with respect
/// to the initial condition. The variational matrix at `t_end = 0` is the
/// identity.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub endpoint: Vec<f64>,
    pub variational: DMatrix<f64>,
    pub trajectory: Trajectory,
}

/// Integrate the augmented system for the unperturbed field psi; returns the
/// full augmented trajectory (x block then row-major Y block).
pub fn flow_variational_dense(
    spec: &SystemSpec,
    x0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<Trajectory> {
    flow_variational_dense_perturbed(spec, x0, t_end, 0.0, tol)
}

/// Same as [`flow_variational_dense`] for the perturbed field
/// psi + eps*phi, whose state Jacobian is psi' + eps*phi_x.
pub fn flow_variational_dense_perturbed(
    spec: &SystemSpec,
    x0: &[f64],
    t_end: f64,
    eps: f64,
    tol: f64,
) -> Result<Trajectory> {
    let n = spec.n;
    assert_eq!(x0.len(), n);
    let mut y0 = vec![0.0; n + n * n];
    y0[..n].copy_from_slice(x0);
    for i in 0..n {
        y0[n + i * n + i] = 1.0;
    }
    if t_end == 0.0 {
        let mut d = vec![0.0; n + n * n];
        let mut s = EvalScratch::default();
        let mut jbuf = vec![0.0; n * n];
        let mut jbuf2 = vec![0.0; n * n];
        spec.eval_perturbed_into(0.0, x0, eps, &mut d[..n], &mut s);
        spec.eval_psi_jac_into(x0, &mut jbuf, &mut s);
        if eps != 0.0 {
            spec.eval_phi_jac_into(0.0, x0, eps, &mut jbuf2, &mut s);
            for k in 0..n * n {
                jbuf[k] += eps * jbuf2[k];
            }
        }
        // Y' = J at t=0 since Y(0) = I
        let dn = d.split_at_mut(n).1;
        dn.copy_from_slice(&jbuf);
        return Ok(Trajectory::single(0.0, y0, d));
    }

    let mut s = EvalScratch::default();
    let mut jbuf = vec![0.0; n * n];
    let mut jtmp = vec![0.0; n * n];
    let rhs = move |t: f64, y: &[f64], out: &mut [f64]| {
        let (x, ymat) = y.split_at(n);
        spec.eval_perturbed_into(t, x, eps, &mut out[..n], &mut s);
        spec.eval_psi_jac_into(x, &mut jbuf, &mut s);
        if eps != 0.0 {
            spec.eval_phi_jac_into(t, x, eps, &mut jtmp, &mut s);
            for k in 0..n * n {
                jbuf[k] += eps * jtmp[k];
            }
        }
        let dy = &mut out[n..];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += jbuf[i * n + l] * ymat[l * n + j];
                }
                dy[i * n + j] = acc;
            }
        }
    };
    integrate(rhs, &y0, (0.0, t_end), tol)
}

/// Flow map x(t_end, x0) together with the variational matrix
/// Y(t_end) = d x(t_end, xi)/d xi at xi = x0.
pub fn flow_with_variational(
    spec: &SystemSpec,
    x0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<FlowResult> {
    flow_with_variational_perturbed(spec, x0, t_end, 0.0, tol)
}

pub fn flow_with_variational_perturbed(
    spec: &SystemSpec,
    x0: &[f64],
    t_end: f64,
    eps: f64,
    tol: f64,
) -> Result<FlowResult> {
    let n = spec.n;
    let aug = flow_variational_dense_perturbed(spec, x0, t_end, eps, tol)?;
    let last = aug.times().len() - 1;
    let yend = aug.node_state(last);
    let endpoint = yend[..n].to_vec();
    let variational = DMatrix::from_row_slice(n, n, &yend[n..]);
    Ok(FlowResult {
        endpoint,
        variational,
        trajectory: aug.project(n),
    })
}

/// Integrate the adjoint system z' = -(psi'(x0(t)))^T z forward in t, with
/// x0(t) read from the dense cycle trajectory.
pub fn integrate_adjoint(
    spec: &SystemSpec,
    cycle_traj: &Trajectory,
    z_start: &[f64],
    t_span: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    let n = spec.n;
    assert_eq!(z_start.len(), n);
    let mut s = EvalScratch::default();
    let mut xbuf = vec![0.0; n];
    let mut jbuf = vec![0.0; n * n];
    let rhs = move |t: f64, z: &[f64], out: &mut [f64]| {
        cycle_traj.eval_into(t, &mut xbuf);
        spec.eval_psi_jac_into(&xbuf, &mut jbuf, &mut s);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += jbuf[j * n + i] * z[j]; // transposed
            }
            out[i] = -acc;
        }
    };
    integrate(rhs, z_start, t_span, tol)
}

/// Scalar event function g(x): signed distance to a boundary.
pub type EventFn = Box<dyn Fn(&[f64]) -> f64>;

/// Scalar event function along a trajectory with a crossing-direction filter.
pub struct EventSpec {
    pub g: EventFn,
    /// +1: only upward crossings (g increasing through 0), -1: downward, 0: any.
    pub direction: i8,
    /// |g| threshold below which a signless local minimum counts as a graze.
    pub transversality_tol: f64,
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Earliest time in `search` at which the event function crosses zero in the
/// filtered direction; `Ok(None)` when the event never fires.
///
/// Sign scan on the dense grid refined to 4x node density, then bisection to
/// a time tolerance of 1e-12 of the search span. A local minimum of |g| below
/// the transversality tolerance without a sign change is a grazing contact.
pub fn locate_event(
    traj: &Trajectory,
    ev: &EventSpec,
    search: (f64, f64),
) -> Result<Option<f64>> {
    let (ta, tb) = search;
    assert!(ta < tb, "empty search interval");
    assert!(
        ta >= traj.t_start() - 1e-9 && tb <= traj.t_end() + 1e-9,
        "search interval outside trajectory span"
    );

    // scan grid: trajectory nodes refined 4x, clipped to the search window
    let mut grid = Vec::new();
    grid.push(ta);
    for w in traj.times().windows(2) {
        let (t0, t1) = (w[0], w[1]);
        for q in 0..4 {
            let t = t0 + (t1 - t0) * (q as f64 + 1.0) / 4.0;
            if t > ta && t < tb {
                grid.push(t);
            }
        }
        if t1 > ta && t1 < tb {
            grid.push(t1);
        }
    }
    grid.push(tb);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let gs: Vec<f64> = grid.iter().map(|&t| (ev.g)(&traj.eval(t))).collect();
    let span = tb - ta;
    let t_tol = 1e-12 * span;

    let eval_g = |t: f64| (ev.g)(&traj.eval(t));
    let dir_ok = |lo: f64, hi: f64| -> bool {
        match ev.direction {
            1 => lo < 0.0 && hi > 0.0,
            -1 => lo > 0.0 && hi < 0.0,
            _ => sign_of(lo) != sign_of(hi),
        }
    };

    // a sign change is only trusted as transversal when |g| exceeds the
    // transversality tolerance somewhere in the two-cell neighborhood;
    // otherwise the flip is indistinguishable from a tangential touch
    let window_max = |i: usize| -> f64 {
        let lo = i.saturating_sub(2);
        let hi = (i + 3).min(gs.len() - 1);
        gs[lo..=hi].iter().fold(0.0f64, |a, v| a.max(v.abs()))
    };
    let window_min_at = |i: usize| -> usize {
        let lo = i.saturating_sub(2);
        let hi = (i + 3).min(gs.len() - 1);
        (lo..=hi)
            .min_by(|a, b| gs[*a].abs().partial_cmp(&gs[*b].abs()).unwrap())
            .unwrap()
    };

    for i in 0..gs.len() {
        // exact zero on a grid node with a genuine sign change around it
        if gs[i] == 0.0 && i > 0 && i + 1 < gs.len() {
            let (gl, gr) = (gs[i - 1], gs[i + 1]);
            if sign_of(gl) != 0 && sign_of(gr) != 0 && sign_of(gl) != sign_of(gr) {
                if window_max(i) < ev.transversality_tol {
                    let j = window_min_at(i);
                    return Err(Error::GrazingContact {
                        t: grid[j],
                        value: gs[j],
                    });
                }
                if dir_ok(gl, gr) {
                    return Ok(Some(grid[i]));
                }
                continue;
            }
        }
        // crossing in the cell [i, i+1]
        if i + 1 < gs.len() {
            let (glo, ghi) = (gs[i], gs[i + 1]);
            if sign_of(glo) != 0 && sign_of(ghi) != 0 && sign_of(glo) != sign_of(ghi) {
                if window_max(i) < ev.transversality_tol {
                    let j = window_min_at(i);
                    return Err(Error::GrazingContact {
                        t: grid[j],
                        value: gs[j],
                    });
                }
                if dir_ok(glo, ghi) {
                    let (mut lo, mut hi) = (grid[i], grid[i + 1]);
                    let mut flo = glo;
                    while hi - lo > t_tol {
                        let mid = 0.5 * (lo + hi);
                        let fm = eval_g(mid);
                        if sign_of(fm) == sign_of(flo) && fm != 0.0 {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    return Ok(Some(0.5 * (lo + hi)));
                }
                continue; // crossing in the unfiltered direction: not a graze
            }
        }
        // grazing: |g| local minimum below tolerance without a sign change.
        // The first scan point is exempt so a search may start on the surface.
        if i > 0 && gs[i].abs() < ev.transversality_tol {
            let left_ok = gs[i - 1].abs() >= gs[i].abs();
            let right_ok = i + 1 == gs.len() || gs[i + 1].abs() >= gs[i].abs();
            let neighbors_same = i + 1 == gs.len()
                || sign_of(gs[i - 1]) == sign_of(gs[i + 1])
                || sign_of(gs[i - 1]) == 0
                || sign_of(gs[i + 1]) == 0;
            if left_ok && right_ok && neighbors_same {
                return Err(Error::GrazingContact {
                    t: grid[i],
                    value: gs[i],
                });
            }
        }
    }
    Ok(None)
}

fn rms_scaled(v: &[f64], ref_x: &[f64], tol: f64) -> f64 {
    let mut acc = 0.0;
    for (a, r) in v.iter().zip(ref_x) {
        let sc = tol * (1.0 + r.abs());
        acc += (a / sc) * (a / sc);
    }
    (acc / v.len() as f64).sqrt()
}

/// Euclidean norm helper used across modules.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
