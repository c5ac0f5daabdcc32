//! The Malkin bifurcation function
//!
//! ```text
//! f(theta) = sign<x0'(0), z0(0)> * integral_0^T <z0(tau), phi(tau - theta, x0(tau), 0)> dtau
//! ```
//!
//! evaluated by composite Gauss-Legendre quadrature, together with an
//! independent route through the averaged inverse-variational integrand
//!
//! ```text
//! F(xi) = integral_0^T (dx(tau, xi)/dxi)^(-1) phi(tau, x(tau, xi), 0) dtau,
//! f(theta) = sign<x0'(0), z0(0)> * <F(x0(theta)), z0(theta)>,
//! ```
//!
//! zero detection and classification, and scalar interval degrees.

use crate::adjoint::AdjointCycle;
use crate::cycle::LimitCycle;
use crate::error::{Error, Result};
use crate::ode::{flow_variational_dense, Trajectory};
use crate::system::{EvalScratch, SystemSpec};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// 4-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 4] = [
    -0.8611363115940526,
    -0.33998104358485626,
    0.33998104358485626,
    0.8611363115940526,
];
const GL_WEIGHTS: [f64; 4] = [
    0.34785484513745385,
    0.6521451548625461,
    0.6521451548625461,
    0.34785484513745385,
];

pub const DEFAULT_PANELS: usize = 64;
pub const DEFAULT_SAMPLES: usize = 256;

/// Quadrature context shared by a bifurcation function and all its shifts.
#[derive(Debug)]
struct FnCtx {
    cycle_traj: Trajectory,
    z_traj: Trajectory,
    spec: SystemSpec,
    sign_factor: f64,
    period: f64,
    panels: usize,
}

impl FnCtx {
    /// f(theta) by composite Gauss-Legendre quadrature; theta in [0, T].
    fn quad(&self, theta: f64) -> Result<f64> {
        let n = self.spec.n;
        let mut s = EvalScratch::default();
        let mut xbuf = vec![0.0; n];
        let mut zbuf = vec![0.0; n];
        let mut pbuf = vec![0.0; n];
        let w = self.period / self.panels as f64;
        let mut acc = 0.0;
        for p in 0..self.panels {
            let t0 = w * p as f64;
            for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS) {
                let tau = t0 + 0.5 * w * (1.0 + node);
                self.cycle_traj.eval_into(tau, &mut xbuf);
                self.z_traj.eval_into(tau, &mut zbuf);
                self.spec.eval_phi_into(tau - theta, &xbuf, 0.0, &mut pbuf, &mut s);
                let mut ip = 0.0;
                for i in 0..n {
                    ip += zbuf[i] * pbuf[i];
                }
                if !ip.is_finite() {
                    return Err(self.spec.explain_phi_nonfinite(tau - theta, &xbuf, 0.0));
                }
                acc += 0.5 * w * weight * ip;
            }
        }
        Ok(self.sign_factor * acc)
    }
}

/// How a zero of f was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroKind {
    SignChange,
    TangentialSuspect,
}

#[derive(Debug, Clone)]
pub struct ZeroRecord {
    pub theta_star: f64,
    pub kind: ZeroKind,
    /// Grid bracket the zero was detected in; for sign changes
    /// f(bracket.0) * f(bracket.1) < 0.
    pub bracket: (f64, f64),
    /// |f(theta_star)| after refinement.
    pub residual: f64,
}

/// Sampled bifurcation function on a uniform grid over [0, T] with classified
/// zeros. Evaluation at arbitrary phases goes through the stored quadrature
/// context, so shifted copies stay exact rather than interpolated.
#[derive(Debug, Clone)]
pub struct BifurcationFunction {
    thetas: Vec<f64>,
    values: Vec<f64>,
    zeros: Vec<ZeroRecord>,
    pub panels: usize,
    shift: f64,
    ctx: Arc<FnCtx>,
}

impl BifurcationFunction {
    pub fn period(&self) -> f64 {
        self.ctx.period
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn zeros(&self) -> &[ZeroRecord] {
        &self.zeros
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// All-zero grids are reported as suspect rather than analyzed further.
    pub fn identically_zero_suspect(&self) -> bool {
        self.max_abs() <= 1e-9 * (1.0 + self.period())
    }

    /// f at an arbitrary phase (exact quadrature, not grid interpolation).
    pub fn eval(&self, theta: f64) -> Result<f64> {
        let t = (theta + self.shift).rem_euclid(self.ctx.period);
        self.ctx.quad(t)
    }
}

fn quad_direct(
    cycle: &LimitCycle,
    adj: &AdjointCycle,
    spec: &SystemSpec,
    panels: usize,
) -> FnCtx {
    FnCtx {
        cycle_traj: cycle.trajectory.clone(),
        z_traj: adj.z_traj.clone(),
        spec: spec.clone(),
        sign_factor: adj.sign_factor,
        period: cycle.period,
        panels,
    }
}

/// f(theta) by the defining quadrature.
pub fn eval_f(
    cycle: &LimitCycle,
    adj: &AdjointCycle,
    spec: &SystemSpec,
    theta: f64,
    panels: usize,
) -> Result<f64> {
    quad_direct(cycle, adj, spec, panels).quad(theta)
}

/// f(theta) through the independent identity route: integrate the variational
/// flow from x0(theta), average the inverse-variational image of phi, and
/// project on z0(theta). Matrix inverses use dense LU with partial pivoting;
/// conditioning beyond 1e12 is refused.
pub fn eval_f_alt(
    cycle: &LimitCycle,
    adj: &AdjointCycle,
    spec: &SystemSpec,
    theta: f64,
    panels: usize,
    tol: f64,
) -> Result<f64> {
    let n = spec.n;
    let xi_theta = cycle.point(theta);
    let int_tol = (tol * 1e-2).clamp(1e-13, 1e-6);
    let aug = flow_variational_dense(spec, &xi_theta, cycle.period, int_tol)?;

    let mut s = EvalScratch::default();
    let mut ybuf = vec![0.0; n + n * n];
    let mut pbuf = vec![0.0; n];
    let w = cycle.period / panels as f64;
    let mut fhat = DVector::<f64>::zeros(n);
    for p in 0..panels {
        let t0 = w * p as f64;
        for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let tau = t0 + 0.5 * w * (1.0 + node);
            aug.eval_into(tau, &mut ybuf);
            let x = &ybuf[..n];
            let ymat = DMatrix::from_row_slice(n, n, &ybuf[n..]);
            spec.eval_phi_into(tau, x, 0.0, &mut pbuf, &mut s);
            let phi = DVector::from_column_slice(&pbuf);
            let lu = ymat.clone().lu();
            let inv = lu.try_inverse().ok_or(Error::SingularVariationalMatrix {
                tau,
                condition: f64::INFINITY,
            })?;
            let condition = ymat.norm() * inv.norm();
            if condition > 1e12 {
                return Err(Error::SingularVariationalMatrix { tau, condition });
            }
            fhat += (inv * phi) * (0.5 * w * weight);
        }
    }

    let z = adj.z(theta);
    let mut ip = 0.0;
    for i in 0..n {
        ip += fhat[i] * z[i];
    }
    if !ip.is_finite() {
        return Err(Error::NonFiniteValue {
            subexpression: "<F(x0(theta)), z0(theta)>".into(),
        });
    }
    Ok(adj.sign_factor * ip)
}

/// Uniform sampling of f with zero detection: sign-change brackets are
/// refined by bisection to 1e-10*T; signless local minima of |f| below
/// 1e-6*max|f| are recorded as tangential suspects.
pub fn sample_f(
    cycle: &LimitCycle,
    adj: &AdjointCycle,
    spec: &SystemSpec,
    m: usize,
    panels: usize,
) -> Result<BifurcationFunction> {
    assert!(m >= 16, "need at least 16 samples");
    let ctx = Arc::new(quad_direct(cycle, adj, spec, panels));
    let period = ctx.period;
    let thetas: Vec<f64> = (0..=m).map(|i| period * i as f64 / m as f64).collect();
    let mut values = Vec::with_capacity(m + 1);
    for &th in &thetas {
        values.push(ctx.quad(th)?);
    }
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut zeros: Vec<ZeroRecord> = Vec::new();
    let theta_tol = 1e-10 * period;
    let refine = |lo: f64, hi: f64, flo: f64| -> Result<(f64, f64)> {
        let (mut lo, mut hi, mut flo) = (lo, hi, flo);
        while hi - lo > theta_tol {
            let mid = 0.5 * (lo + hi);
            let fm = ctx.quad(mid.rem_euclid(period))?;
            if fm == 0.0 {
                return Ok((mid, 0.0));
            }
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let mid = 0.5 * (lo + hi);
        Ok((mid, ctx.quad(mid.rem_euclid(period))?.abs()))
    };

    // regular cells plus one wrap cell catching a zero sitting at 0 == T
    let mut cells: Vec<(f64, f64, f64, f64)> = Vec::new();
    for i in 0..m {
        cells.push((thetas[i], thetas[i + 1], values[i], values[i + 1]));
    }
    if m >= 2 {
        cells.push((
            thetas[m - 1],
            period + thetas[1],
            values[m - 1],
            values[1],
        ));
    }
    for (lo, hi, flo, fhi) in cells {
        if flo != 0.0 && fhi != 0.0 && (flo < 0.0) != (fhi < 0.0) {
            let (theta_raw, residual) = refine(lo, hi, flo)?;
            let mut theta_star = theta_raw.rem_euclid(period);
            if period - theta_star < 1e-8 * period {
                theta_star = 0.0;
            }
            zeros.push(ZeroRecord {
                theta_star,
                kind: ZeroKind::SignChange,
                bracket: (lo, hi),
                residual,
            });
        }
    }

    // tangential suspects: cyclic interior minima of |f| without sign change
    if max_abs > 0.0 {
        let thr = 1e-6 * max_abs;
        for i in 0..m {
            let prev = if i == 0 { m - 1 } else { i - 1 };
            let next = i + 1;
            let (a, b, c) = (values[prev].abs(), values[i].abs(), values[next].abs());
            if b < thr
                && b <= a
                && b <= c
                && values[prev] != 0.0
                && values[next] != 0.0
                && (values[prev] < 0.0) == (values[next] < 0.0)
            {
                // golden-section polish of |f| over the (possibly wrapping)
                // one-cell neighborhood
                let h = period / m as f64;
                let (mut lo, mut hi) = (thetas[i] - h, thetas[i] + h);
                let phi_r = 0.5 * (3.0 - 5.0f64.sqrt());
                let mut x1 = lo + phi_r * (hi - lo);
                let mut x2 = hi - phi_r * (hi - lo);
                let mut f1 = ctx.quad(x1.rem_euclid(period))?.abs();
                let mut f2 = ctx.quad(x2.rem_euclid(period))?.abs();
                for _ in 0..60 {
                    if f1 < f2 {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = lo + phi_r * (hi - lo);
                        f1 = ctx.quad(x1.rem_euclid(period))?.abs();
                    } else {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = hi - phi_r * (hi - lo);
                        f2 = ctx.quad(x2.rem_euclid(period))?.abs();
                    }
                }
                let theta_star = (0.5 * (lo + hi)).rem_euclid(period);
                let residual = ctx.quad(theta_star)?.abs();
                zeros.push(ZeroRecord {
                    theta_star,
                    kind: ZeroKind::TangentialSuspect,
                    bracket: (thetas[i] - h, thetas[i] + h),
                    residual,
                });
            }
        }
    }

    // dedupe zeros that were caught by two overlapping cells (wrap)
    zeros.sort_by(|a, b| a.theta_star.partial_cmp(&b.theta_star).unwrap());
    let mut deduped: Vec<ZeroRecord> = Vec::new();
    for z in zeros {
        let dup = deduped.iter().any(|u| {
            let d = (u.theta_star - z.theta_star).abs();
            d.min(period - d) < 1e-8 * period
        });
        if !dup {
            deduped.push(z);
        }
    }

    Ok(BifurcationFunction {
        thetas,
        values,
        zeros: deduped,
        panels,
        shift: 0.0,
        ctx,
    })
}

/// Brouwer degree of the scalar map f on (a, b):
/// (sign f(b) - sign f(a)) / 2. Endpoint values within 1e-9 of max|f| violate
/// the nondegeneracy hypothesis and are refused.
pub fn degree_on_interval(bf: &BifurcationFunction, a: f64, b: f64) -> Result<i32> {
    let threshold = 1e-9 * bf.max_abs();
    let fa = bf.eval(a)?;
    let fb = bf.eval(b)?;
    for (theta, value) in [(a, fa), (b, fb)] {
        if value.abs() <= threshold {
            return Err(Error::BoundaryZero {
                theta,
                value,
                threshold,
            });
        }
    }
    let sa = if fa > 0.0 { 1 } else { -1 };
    let sb = if fb > 0.0 { 1 } else { -1 };
    Ok((sb - sa) / 2)
}

/// Bifurcation function of the shifted cycle: f_shifted(theta) = f(theta + s)
/// with wraparound; grid values are recomputed through the quadrature context
/// and zeros are reindexed.
pub fn shift_f(bf: &BifurcationFunction, s: f64) -> Result<BifurcationFunction> {
    let period = bf.ctx.period;
    let shift = (bf.shift + s).rem_euclid(period);
    let values = if shift == bf.shift {
        // shift by 0 or by a full period: samples are identical
        bf.values.clone()
    } else {
        let mut values = Vec::with_capacity(bf.thetas.len());
        for &th in &bf.thetas {
            values.push(bf.ctx.quad((th + shift).rem_euclid(period))?);
        }
        values
    };
    let mut zeros: Vec<ZeroRecord> = bf
        .zeros
        .iter()
        .map(|z| {
            let mut theta_star = (z.theta_star - s).rem_euclid(period);
            if period - theta_star < 1e-8 * period {
                theta_star = 0.0;
            }
            ZeroRecord {
                theta_star,
                kind: z.kind,
                bracket: (z.bracket.0 - s, z.bracket.1 - s),
                residual: z.residual,
            }
        })
        .collect();
    zeros.sort_by(|a, b| a.theta_star.partial_cmp(&b.theta_star).unwrap());
    Ok(BifurcationFunction {
        thetas: bf.thetas.clone(),
        values,
        zeros,
        panels: bf.panels,
        shift,
        ctx: Arc::clone(&bf.ctx),
    })
}
