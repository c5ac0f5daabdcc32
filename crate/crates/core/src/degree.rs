//! Finite-dimensional degree computations for regions U of state space:
//! cycle-boundary contacts and first exit phases, the Brouwer degree of psi
//! on U by equilibrium enumeration, an independent planar winding-number
//! oracle, the aggregate degree
//!
//! ```text
//! total = (-1)^n d(psi, U) - sum over entering contacts of
//!         (-1)^beta * d_R(f_shifted, (0, theta_exit))
//! ```
//!
//! and the boundary-map winding degree of xi - x_eps(T, xi) that verifies it.

use crate::adjoint::AdjointCycle;
use crate::cycle::LimitCycle;
use crate::error::{Error, Result};
use crate::lcg::Lcg;
use crate::malkin::{degree_on_interval, shift_f, BifurcationFunction};
use crate::ode::{integrate_endpoint, norm};
use crate::system::{EvalScratch, SystemSpec};
use nalgebra::{DMatrix, DVector};

/// Ball or axis-aligned box with a continuous signed distance, negative
/// inside and zero exactly on the boundary.
#[derive(Debug, Clone)]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    pub fn dimension(&self) -> usize {
        match self {
            Region::Ball { center, .. } => center.len(),
            Region::Box { lo, .. } => lo.len(),
        }
    }

    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            Region::Ball { center, radius } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                norm(&d) - radius
            }
            Region::Box { lo, hi } => {
                let mut inside_max = f64::NEG_INFINITY;
                let mut out_sq = 0.0;
                for i in 0..lo.len() {
                    let q = (lo[i] - x[i]).max(x[i] - hi[i]);
                    inside_max = inside_max.max(q);
                    if q > 0.0 {
                        out_sq += q * q;
                    }
                }
                if inside_max <= 0.0 {
                    inside_max
                } else {
                    out_sq.sqrt()
                }
            }
        }
    }

    /// Characteristic length used for relative thresholds.
    pub fn scale(&self) -> f64 {
        match self {
            Region::Ball { radius, .. } => *radius,
            Region::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| (b - a) * 0.5)
                .fold(0.0f64, f64::max),
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Region::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    /// Positively oriented boundary polygon (planar regions only).
    pub fn boundary_polygon(&self, count: usize) -> Vec<[f64; 2]> {
        assert_eq!(self.dimension(), 2, "boundary polygon is planar-only");
        match self {
            Region::Ball { center, radius } => (0..count)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
                })
                .collect(),
            Region::Box { lo, hi } => {
                let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
                let perimeter = 2.0 * (w + h);
                (0..count)
                    .map(|k| {
                        let mut s = perimeter * k as f64 / count as f64;
                        if s < w {
                            return [lo[0] + s, lo[1]];
                        }
                        s -= w;
                        if s < h {
                            return [hi[0], lo[1] + s];
                        }
                        s -= h;
                        if s < w {
                            return [hi[0] - s, hi[1]];
                        }
                        s -= w;
                        [lo[0], hi[1] - s]
                    })
                    .collect()
            }
        }
    }

    /// Deterministic boundary sample points in any dimension (LCG-driven).
    pub fn boundary_samples(&self, count: usize, rng: &mut Lcg) -> Vec<Vec<f64>> {
        let n = self.dimension();
        let mut out = Vec::with_capacity(count);
        match self {
            Region::Ball { center, radius } => {
                while out.len() < count {
                    let v: Vec<f64> = (0..n).map(|_| rng.next_in(-1.0, 1.0)).collect();
                    let vn = norm(&v);
                    if vn < 1e-6 {
                        continue;
                    }
                    out.push(
                        v.iter()
                            .zip(center)
                            .map(|(a, c)| c + radius * a / vn)
                            .collect(),
                    );
                }
            }
            Region::Box { lo, hi } => {
                for k in 0..count {
                    let face = k % (2 * n);
                    let axis = face / 2;
                    let upper = face % 2 == 1;
                    let mut p: Vec<f64> =
                        (0..n).map(|i| rng.next_in(lo[i], hi[i])).collect();
                    p[axis] = if upper { hi[axis] } else { lo[axis] };
                    out.push(p);
                }
            }
        }
        out
    }
}

/// One contact of the cycle with the region boundary.
#[derive(Debug, Clone)]
pub struct Contact {
    /// Cycle phase s with x0(s) on the boundary.
    pub phase: f64,
    /// Whether the shifted cycle enters U immediately after the contact.
    pub entering: bool,
    /// First exit phase min Theta^U of the shifted cycle; None when the cycle
    /// leaves immediately (the contact is then excluded from degree sums).
    pub theta_exit: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CycleContactReport {
    pub contacts: Vec<Contact>,
}

/// Scan of the signed distance along the cycle: transversal boundary contacts
/// with entering flags and first exit phases. A touch without crossing (or a
/// cycle lying on the boundary) aborts with GrazingContact.
pub fn cycle_contacts(cycle: &LimitCycle, region: &Region) -> Result<CycleContactReport> {
    let period = cycle.period;
    let g = |s: f64| region.signed_distance(&cycle.point(s));

    // scan grid: trajectory nodes refined 4x
    let mut grid = Vec::new();
    for w in cycle.trajectory.times().windows(2) {
        for q in 0..4 {
            grid.push(w[0] + (w[1] - w[0]) * q as f64 / 4.0);
        }
    }
    grid.push(period);
    let gs: Vec<f64> = grid.iter().map(|&s| g(s)).collect();

    let scale = region.scale().max(1e-12);
    let max_abs = gs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_abs <= 1e-9 * scale {
        return Err(Error::GrazingContact {
            t: 0.0,
            value: max_abs,
        });
    }

    let s_tol = 1e-12 * period;
    let mut contacts: Vec<Contact> = Vec::new();
    let m = grid.len();
    for i in 0..m - 1 {
        let (glo, ghi) = (gs[i], gs[i + 1]);
        if glo != 0.0 && ghi != 0.0 && (glo < 0.0) != (ghi < 0.0) {
            let (mut lo, mut hi, mut flo) = (grid[i], grid[i + 1], glo);
            while hi - lo > s_tol {
                let mid = 0.5 * (lo + hi);
                let fm = g(mid);
                if fm != 0.0 && (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            contacts.push(Contact {
                phase: 0.5 * (lo + hi),
                entering: ghi < 0.0,
                theta_exit: None,
            });
        }
    }

    // tangential suspects: cyclic local minima of |g| with no sign change,
    // polished by golden-section before comparing against the tolerance
    let graze_tol = 1e-7 * scale;
    for i in 0..m - 1 {
        let prev = if i == 0 { m - 2 } else { i - 1 };
        let next = i + 1;
        if gs[i].abs() <= gs[prev].abs()
            && gs[i].abs() <= gs[next].abs()
            && gs[prev] != 0.0
            && gs[next] != 0.0
            && (gs[prev] < 0.0) == (gs[next] < 0.0)
        {
            if gs[i].abs() > 1e-3 * scale {
                continue; // nowhere near the boundary
            }
            let (mut lo, mut hi) = if i == 0 {
                (grid[m - 2] - period, grid[1])
            } else {
                (grid[prev], grid[next])
            };
            let phi_r = 0.5 * (3.0 - 5.0f64.sqrt());
            let mut x1 = lo + phi_r * (hi - lo);
            let mut x2 = hi - phi_r * (hi - lo);
            let mut f1 = g(x1.rem_euclid(period)).abs();
            let mut f2 = g(x2.rem_euclid(period)).abs();
            for _ in 0..70 {
                if f1 < f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = lo + phi_r * (hi - lo);
                    f1 = g(x1.rem_euclid(period)).abs();
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = hi - phi_r * (hi - lo);
                    f2 = g(x2.rem_euclid(period)).abs();
                }
            }
            let s_min = (0.5 * (lo + hi)).rem_euclid(period);
            let v = g(s_min);
            if v.abs() < graze_tol {
                return Err(Error::GrazingContact { t: s_min, value: v });
            }
        }
    }

    if contacts.len() == 1 {
        // a closed curve cannot cross a boundary transversally exactly once
        return Err(Error::GrazingContact {
            t: contacts[0].phase,
            value: 0.0,
        });
    }

    // first exit phase: distance to the next contact around the cycle
    let phases: Vec<f64> = contacts.iter().map(|c| c.phase).collect();
    let k = contacts.len();
    for (j, c) in contacts.iter_mut().enumerate() {
        if c.entering {
            let next = phases[(j + 1) % k];
            let theta = (next - c.phase).rem_euclid(period);
            c.theta_exit = Some(if theta == 0.0 { period } else { theta });
        }
    }

    Ok(CycleContactReport { contacts })
}

fn scale_of(region: &Region) -> f64 {
    region.scale().max(1e-12)
}

/// Brouwer degree of psi on U as the sum of Jacobian determinant signs over
/// the (nondegenerate) equilibria found by deterministic multistart Newton.
pub fn brouwer_degree_psi(spec: &SystemSpec, region: &Region) -> Result<i64> {
    let n = spec.n;
    if n != region.dimension() {
        return Err(Error::InvalidSystem {
            message: format!(
                "region dimension {} does not match system dimension {n}",
                region.dimension()
            ),
        });
    }
    if n > 4 {
        return Err(Error::DimensionTooLarge { n, limit: 4 });
    }

    // psi must not vanish on the boundary
    let mut rng = Lcg::new(Lcg::DEFAULT_SEED);
    for p in region.boundary_samples(512, &mut rng) {
        let v = spec.eval_psi(&p);
        if norm(&v) <= 1e-8 {
            return Err(Error::BoundaryZeroOfPsi {
                location: p,
                value: norm(&v),
            });
        }
    }

    // multistart Newton from 8^n deterministic points in the bounding box
    let (lo, hi) = region.bounding_box();
    let starts = 8usize.pow(n as u32);
    let mut roots: Vec<(Vec<f64>, f64)> = Vec::new(); // (root, stall step size)
    let mut s = EvalScratch::default();
    let mut jbuf = vec![0.0; n * n];
    let ftol = 1e-12;
    for _ in 0..starts {
        let mut x: Vec<f64> = (0..n).map(|i| rng.next_in(lo[i], hi[i])).collect();
        let mut ok = false;
        let mut stall_step = f64::INFINITY;
        for _ in 0..60 {
            let f = spec.eval_psi(&x);
            if !f.iter().all(|v| v.is_finite()) {
                break;
            }
            spec.eval_psi_jac_into(&x, &mut jbuf, &mut s);
            let jac = DMatrix::from_row_slice(n, n, &jbuf);
            let rhs = DVector::from_column_slice(&f);
            let step = match jac.lu().solve(&(-rhs)) {
                Some(d) => d,
                None => break,
            };
            if norm(&f) <= ftol * (1.0 + norm(&x)) {
                // Newton step at convergence estimates the remaining distance
                // to the exact root; a simple root leaves it at noise level
                stall_step = step.norm();
                ok = true;
                break;
            }
            for i in 0..n {
                x[i] += step[i];
            }
            if norm(&x) > 1e6 {
                break;
            }
        }
        if !ok {
            continue;
        }
        // a root sitting on the region boundary violates the precondition
        if region.signed_distance(&x).abs() <= 1e-8 * scale_of(region) {
            let value = norm(&spec.eval_psi(&x));
            return Err(Error::BoundaryZeroOfPsi { location: x, value });
        }
        if region.signed_distance(&x) < 0.0 {
            let dup = roots.iter().any(|(r, _)| {
                let d: Vec<f64> = r.iter().zip(&x).map(|(a, b)| a - b).collect();
                norm(&d) < 1e-6
            });
            if !dup {
                roots.push((x, stall_step));
            }
        }
    }

    let mut degree = 0i64;
    for (r, stall_step) in &roots {
        let jac = spec.psi_jacobian_matrix(r);
        let det = jac.determinant();
        // a stalled Newton step flags a root converging only linearly, i.e.
        // a degenerate zero whose determinant cannot be trusted
        if det.abs() <= 1e-10 || *stall_step > 1e3 * ftol * (1.0 + norm(r)) {
            return Err(Error::DegenerateEquilibrium {
                location: r.clone(),
                det,
            });
        }
        degree += if det > 0.0 { 1 } else { -1 };
    }
    Ok(degree)
}

/// Winding number of a planar vector field along the positively oriented
/// region boundary: total atan2 angle change over a 4096-point polygon,
/// accumulated in (-pi, pi] increments. Any increment above pi/2 triggers a
/// 4x resample, at most twice.
pub fn winding_degree<F>(mut field: F, region: &Region) -> Result<i64>
where
    F: FnMut(f64, f64) -> Result<(f64, f64)>,
{
    let n = region.dimension();
    if n != 2 {
        return Err(Error::DimensionTooLarge { n, limit: 2 });
    }
    let mut count = 4096usize;
    for _attempt in 0..3 {
        let polygon = region.boundary_polygon(count);
        let mut vals = Vec::with_capacity(polygon.len());
        for p in &polygon {
            let (vx, vy) = field(p[0], p[1])?;
            if !vx.is_finite() || !vy.is_finite() || (vx == 0.0 && vy == 0.0) {
                return Err(Error::ZeroOnBoundary {
                    location: vec![p[0], p[1]],
                });
            }
            vals.push((vx, vy));
        }
        let mut total = 0.0;
        let mut resolved = true;
        for i in 0..vals.len() {
            let (ax, ay) = vals[i];
            let (bx, by) = vals[(i + 1) % vals.len()];
            let cross = ax * by - ay * bx;
            let dot = ax * bx + ay * by;
            let d = cross.atan2(dot);
            if d.abs() > std::f64::consts::FRAC_PI_2 {
                resolved = false;
                break;
            }
            total += d;
        }
        if resolved {
            return Ok((total / (2.0 * std::f64::consts::PI)).round() as i64);
        }
        count *= 4;
    }
    Err(Error::UnderResolved { samples: count / 4 })
}

/// One term of the aggregate degree formula.
#[derive(Debug, Clone)]
pub struct DegreeContribution {
    pub phase: f64,
    pub entering: bool,
    pub beta: u32,
    pub theta_exit: Option<f64>,
    /// d_R(f_shifted, (0, theta_exit)) for entering contacts, None otherwise.
    pub interval_degree: Option<i32>,
}

/// All terms of the aggregate degree formula and their sum.
#[derive(Debug, Clone)]
pub struct DegreeReport {
    pub n: usize,
    pub d_psi: i64,
    pub contributions: Vec<DegreeContribution>,
    pub total: i64,
}

/// Assemble the aggregate degree for the region: (-1)^n times the Brouwer
/// degree of psi minus the signed interval degrees of the bifurcation
/// function over (0, theta_exit) at every entering contact. Contacts whose
/// exit set is empty do not contribute.
pub fn aggregate_degree(
    spec: &SystemSpec,
    cycle: &LimitCycle,
    _adj: &AdjointCycle,
    bf: &BifurcationFunction,
    region: &Region,
) -> Result<DegreeReport> {
    let n = spec.n;
    let report = cycle_contacts(cycle, region)?;
    let d_psi = brouwer_degree_psi(spec, region)?;

    let mut contributions = Vec::new();
    let mut sum = 0i64;
    for c in &report.contacts {
        let interval_degree = match c.theta_exit {
            Some(theta_exit) => {
                let shifted = shift_f(bf, c.phase)?;
                let deg = degree_on_interval(&shifted, 0.0, theta_exit).map_err(|e| match e {
                    Error::BoundaryZero { theta, .. } => Error::HypothesisViolation {
                        contact_phase: c.phase,
                        endpoint: (c.phase + theta).rem_euclid(cycle.period),
                    },
                    other => other,
                })?;
                let sign = if cycle.beta.is_multiple_of(2) { 1i64 } else { -1i64 };
                sum += sign * deg as i64;
                Some(deg)
            }
            None => None,
        };
        contributions.push(DegreeContribution {
            phase: c.phase,
            entering: c.entering,
            beta: cycle.beta,
            theta_exit: c.theta_exit,
            interval_degree,
        });
    }

    let sign_n = if n.is_multiple_of(2) { 1i64 } else { -1i64 };
    let total = sign_n * d_psi - sum;
    Ok(DegreeReport {
        n,
        d_psi,
        contributions,
        total,
    })
}

/// Brouwer degree of xi - x_eps(T, xi) on U by direct integration of the
/// perturbed system from boundary samples: the independent verification
/// target for [`aggregate_degree`] totals.
pub fn poincare_degree(spec: &SystemSpec, region: &Region, eps: f64, tol: f64) -> Result<i64> {
    let n = spec.n;
    if n != 2 {
        return Err(Error::DimensionTooLarge { n, limit: 2 });
    }
    assert!(eps >= 0.0);
    let period = spec.period;
    let mut s = EvalScratch::default();
    let field = |x: f64, y: f64| -> Result<(f64, f64)> {
        let end = integrate_endpoint(
            |t: f64, state: &[f64], out: &mut [f64]| {
                spec.eval_perturbed_into(t, state, eps, out, &mut s);
            },
            &[x, y],
            (0.0, period),
            tol,
        )?;
        Ok((x - end[0], y - end[1]))
    };
    winding_degree(field, region)
}
