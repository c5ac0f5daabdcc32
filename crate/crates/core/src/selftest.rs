//! Invariant suite over the bundled example systems, runnable from the CLI.

use crate::adjoint::{periodic_adjoint, perron_residual};
use crate::bundled;
use crate::cycle::{find_cycle, LimitCycle};
use crate::degree::{brouwer_degree_psi, poincare_degree, aggregate_degree, winding_degree, Region};
use crate::error::Result;
use crate::malkin::{eval_f, eval_f_alt, sample_f};
use crate::ode::{flow_with_variational, integrate_endpoint, norm};
use crate::system::{EvalScratch, SystemSpec};
use crate::verify::find_perturbed_orbit;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const TOL: f64 = 1e-10;
const MULT_TOL: f64 = 1e-6;

fn run<F>(checks: &mut Vec<Check>, name: &'static str, body: F)
where
    F: FnOnce() -> Result<std::result::Result<String, String>>,
{
    let (passed, detail) = match body() {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(e) => (false, format!("error: {e}")),
    };
    checks.push(Check {
        name,
        passed,
        detail,
    });
}

fn circle_cycle() -> Result<(SystemSpec, LimitCycle)> {
    let spec = bundled::circle();
    let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL)?;
    Ok((spec, cycle))
}

/// Run the bundled-example invariant suite; every check must pass for the
/// selftest subcommand to exit 0.
pub fn run_selftest() -> Vec<Check> {
    let mut checks = Vec::new();

    run(&mut checks, "jacobian-vs-finite-differences", || {
        let spec = bundled::circle();
        let mut rng = crate::lcg::Lcg::new(crate::lcg::Lcg::DEFAULT_SEED);
        let mut worst = 0.0f64;
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
                    let rel = (jac[(i, j)] - fd).abs() / (1.0 + fd.abs());
                    worst = worst.max(rel);
                }
            }
        }
        Ok(if worst <= 1e-6 {
            Ok(format!("max rel err {worst:.2e}"))
        } else {
            Err(format!("max rel err {worst:.2e} > 1e-6"))
        })
    });

    run(&mut checks, "variational-vs-flow-differences", || {
        let (spec, cycle) = circle_cycle()?;
        let mut rng = crate::lcg::Lcg::new(7);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let s = rng.next_in(0.0, cycle.period);
            let mut xi = cycle.point(s);
            for c in xi.iter_mut() {
                *c += rng.next_in(-0.05, 0.05);
            }
            let flow = flow_with_variational(&spec, &xi, cycle.period, 1e-12)?;
            let h = 1e-6;
            for j in 0..2 {
                let mut xp = xi.clone();
                let mut xm = xi.clone();
                xp[j] += h;
                xm[j] -= h;
                let fp = flow_with_variational(&spec, &xp, cycle.period, 1e-12)?.endpoint;
                let fm = flow_with_variational(&spec, &xm, cycle.period, 1e-12)?.endpoint;
                for i in 0..2 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    let rel = (flow.variational[(i, j)] - fd).abs() / (1.0 + fd.abs());
                    worst = worst.max(rel);
                }
            }
        }
        Ok(if worst <= 1e-4 {
            Ok(format!("max rel err {worst:.2e}"))
        } else {
            Err(format!("max rel err {worst:.2e} > 1e-4"))
        })
    });

    run(&mut checks, "flow-group-property", || {
        let specs = [
            bundled::circle(),
            SystemSpec::new(2, 1.0, &bundled::VDP_PSI, &["0", "0"])?,
        ];
        let mut worst = 0.0f64;
        for spec in &specs {
            let mut s = EvalScratch::default();
            let x0 = [1.3, 0.4];
            let (t1, t2) = (0.7, 1.9);
            let rhs = |_t: f64, x: &[f64], out: &mut [f64]| spec.eval_psi_into(x, out, &mut s);
            let a = integrate_endpoint(rhs, &x0, (0.0, t1 + t2), 1e-10)?;
            let mut s2 = EvalScratch::default();
            let rhs2 = |_t: f64, x: &[f64], out: &mut [f64]| spec.eval_psi_into(x, out, &mut s2);
            let mid = integrate_endpoint(rhs2, &x0, (0.0, t1), 1e-10)?;
            let mut s3 = EvalScratch::default();
            let rhs3 = |_t: f64, x: &[f64], out: &mut [f64]| spec.eval_psi_into(x, out, &mut s3);
            let b = integrate_endpoint(rhs3, &mid, (0.0, t2), 1e-10)?;
            let d: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
            worst = worst.max(norm(&d));
        }
        Ok(if worst <= 10.0 * 1e-10 * 100.0 {
            Ok(format!("max defect {worst:.2e}"))
        } else {
            Err(format!("max defect {worst:.2e}"))
        })
    });

    run(&mut checks, "variational-semigroup", || {
        let (spec, cycle) = circle_cycle()?;
        let xi = cycle.xi0.clone();
        let (t1, t2) = (1.1, 2.3);
        let f1 = flow_with_variational(&spec, &xi, t1, 1e-12)?;
        let f2 = flow_with_variational(&spec, &f1.endpoint, t2, 1e-12)?;
        let f12 = flow_with_variational(&spec, &xi, t1 + t2, 1e-12)?;
        let defect = (&f2.variational * &f1.variational - &f12.variational).norm();
        Ok(if defect <= 1e-6 {
            Ok(format!("defect {defect:.2e}"))
        } else {
            Err(format!("defect {defect:.2e} > 1e-6"))
        })
    });

    run(&mut checks, "multiplier-product-equals-det", || {
        let (_, cycle) = circle_cycle()?;
        let prod = cycle
            .multipliers
            .iter()
            .fold(num_complex::Complex64::new(1.0, 0.0), |a, b| a * b);
        let det = cycle.monodromy.determinant();
        let rel = (prod.re - det).abs() / det.abs().max(1e-300);
        Ok(if rel <= 1e-8 && prod.im.abs() <= 1e-8 {
            Ok(format!("rel err {rel:.2e}"))
        } else {
            Err(format!("rel err {rel:.2e} > 1e-8"))
        })
    });

    run(&mut checks, "liouville-trace-identity", || {
        let (spec, cycle) = circle_cycle()?;
        // quadrature of trace psi'(x0(tau)) over the period
        let panels = 256;
        let w = cycle.period / panels as f64;
        let nodes = [-0.8611363115940526, -0.33998104358485626, 0.33998104358485626, 0.8611363115940526];
        let weights = [0.34785484513745385, 0.6521451548625461, 0.6521451548625461, 0.34785484513745385];
        let mut acc = 0.0;
        for p in 0..panels {
            for (nd, wt) in nodes.iter().zip(weights) {
                let tau = w * p as f64 + 0.5 * w * (1.0 + nd);
                let x = cycle.point(tau);
                let jac = spec.psi_jacobian_matrix(&x);
                acc += 0.5 * w * wt * jac.trace();
            }
        }
        let det = cycle.monodromy.determinant();
        let rel = (det - acc.exp()).abs() / acc.exp();
        Ok(if rel <= 1e-6 {
            Ok(format!("rel err {rel:.2e}"))
        } else {
            Err(format!("rel err {rel:.2e} > 1e-6"))
        })
    });

    run(&mut checks, "circle-multipliers", || {
        let (_, cycle) = circle_cycle()?;
        let trivial = cycle.multipliers[cycle.trivial_index];
        let other = cycle.multipliers[1 - cycle.trivial_index];
        let expect = (-4.0 * std::f64::consts::PI).exp();
        let e1 = (trivial - num_complex::Complex64::new(1.0, 0.0)).norm();
        let e2 = (other - num_complex::Complex64::new(expect, 0.0)).norm();
        Ok(if e1 <= 1e-8 && e2 <= 1e-6 && cycle.beta == 0 {
            Ok(format!("|l1-1|={e1:.1e}, |l2-e^-4pi|={e2:.1e}, beta=0"))
        } else {
            Err(format!("multipliers off: {e1:.1e}, {e2:.1e}, beta={}", cycle.beta))
        })
    });

    run(&mut checks, "perron-constancy", || {
        let (spec, cycle) = circle_cycle()?;
        let adj = periodic_adjoint(&spec, &cycle, TOL)?;
        let r1 = perron_residual(&cycle, &adj);
        let (vspec, vcycle) = bundled::van_der_pol_forced(TOL, MULT_TOL)?;
        let vadj = periodic_adjoint(&vspec, &vcycle, TOL)?;
        let r2 = perron_residual(&vcycle, &vadj);
        Ok(if r1 <= 1e-6 && r2 <= 1e-6 {
            Ok(format!("circle {r1:.2e}, van der Pol {r2:.2e}"))
        } else {
            Err(format!("residuals {r1:.2e}, {r2:.2e} > 1e-6"))
        })
    });

    run(&mut checks, "adjoint-sign-flip-invariance", || {
        let (spec, cycle) = circle_cycle()?;
        let adj = periodic_adjoint(&spec, &cycle, TOL)?;
        let flipped = adj.rescaled(-1.0);
        let mut worst = 0.0f64;
        for i in 0..16 {
            let th = cycle.period * i as f64 / 16.0;
            let a = eval_f(&cycle, &adj, &spec, th, 64)?;
            let b = eval_f(&cycle, &flipped, &spec, th, 64)?;
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        }
        Ok(if worst <= 1e-12 {
            Ok(format!("max rel diff {worst:.2e}"))
        } else {
            Err(format!("max rel diff {worst:.2e} > 1e-12"))
        })
    });

    run(&mut checks, "bifurcation-identity-route", || {
        let (spec, cycle) = circle_cycle()?;
        let adj = periodic_adjoint(&spec, &cycle, TOL)?;
        let bf = sample_f(&cycle, &adj, &spec, 64, 64)?;
        let scale = 1.0 + bf.max_abs();
        let mut rng = crate::lcg::Lcg::new(3);
        let mut worst = 0.0f64;
        for _ in 0..16 {
            let th = rng.next_in(0.0, cycle.period);
            let a = eval_f(&cycle, &adj, &spec, th, 64)?;
            let b = eval_f_alt(&cycle, &adj, &spec, th, 64, TOL)?;
            worst = worst.max((a - b).abs());
        }
        let (vspec, vcycle) = bundled::van_der_pol_forced(TOL, MULT_TOL)?;
        let vadj = periodic_adjoint(&vspec, &vcycle, TOL)?;
        let vbf = sample_f(&vcycle, &vadj, &vspec, 64, 64)?;
        let vscale = 1.0 + vbf.max_abs();
        let mut vworst = 0.0f64;
        for _ in 0..16 {
            let th = rng.next_in(0.0, vcycle.period);
            let a = eval_f(&vcycle, &vadj, &vspec, th, 64)?;
            let b = eval_f_alt(&vcycle, &vadj, &vspec, th, 64, TOL)?;
            vworst = vworst.max((a - b).abs());
        }
        Ok(if worst <= 1e-5 * scale && vworst <= 1e-5 * vscale {
            Ok(format!("circle {worst:.2e}, van der Pol {vworst:.2e}"))
        } else {
            Err(format!("diffs {worst:.2e}, {vworst:.2e}"))
        })
    });

    run(&mut checks, "quadrature-panel-doubling", || {
        let (spec, cycle) = circle_cycle()?;
        let adj = periodic_adjoint(&spec, &cycle, TOL)?;
        let mut worst = 0.0f64;
        for i in 0..16 {
            let th = cycle.period * i as f64 / 16.0;
            let a = eval_f(&cycle, &adj, &spec, th, 64)?;
            let b = eval_f(&cycle, &adj, &spec, th, 128)?;
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        }
        Ok(if worst <= 1e-8 {
            Ok(format!("max rel change {worst:.2e}"))
        } else {
            Err(format!("max rel change {worst:.2e} > 1e-8"))
        })
    });

    run(&mut checks, "bifurcation-periodicity", || {
        let (spec, cycle) = circle_cycle()?;
        let adj = periodic_adjoint(&spec, &cycle, TOL)?;
        let bf = sample_f(&cycle, &adj, &spec, 64, 64)?;
        let mut worst = 0.0f64;
        for i in 0..16 {
            let th = cycle.period * i as f64 / 16.0;
            let a = bf.eval(th)?;
            let b = bf.eval(th + cycle.period)?;
            worst = worst.max((a - b).abs());
        }
        Ok(if worst <= 1e-8 {
            Ok(format!("max diff {worst:.2e}"))
        } else {
            Err(format!("max diff {worst:.2e} > 1e-8"))
        })
    });

    run(&mut checks, "brouwer-vs-winding", || {
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
        ];
        for region in &regions {
            let d1 = brouwer_degree_psi(&spec, region)?;
            let spec_ref = &spec;
            let d2 = winding_degree(
                |x, y| {
                    let v = spec_ref.eval_psi(&[x, y]);
                    Ok((v[0], v[1]))
                },
                region,
            )?;
            if d1 != d2 {
                return Ok(Err(format!("brouwer {d1} != winding {d2} on {region:?}")));
            }
        }
        Ok(Ok("ball r2 and box agree".into()))
    });

    run(&mut checks, "degree-formula-vs-poincare", || {
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
        for (p1, p2, region, expect) in cases {
            let spec = bundled::circle_with_phi(p1, p2);
            let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL)?;
            let adj = periodic_adjoint(&spec, &cycle, TOL)?;
            let bf = sample_f(&cycle, &adj, &spec, 256, 64)?;
            let report = aggregate_degree(&spec, &cycle, &adj, &bf, region)?;
            if report.total != expect {
                return Ok(Err(format!(
                    "phi=({p1},{p2}): formula total {} != expected {expect}",
                    report.total
                )));
            }
            let pd = poincare_degree(&spec, region, 1e-3, 1e-10)?;
            if pd != report.total {
                return Ok(Err(format!(
                    "phi=({p1},{p2}): poincare {pd} != formula {}",
                    report.total
                )));
            }
        }
        Ok(Ok("totals 1, 2, 0 confirmed at eps = 1e-3".into()))
    });

    run(&mut checks, "z-rescaling-degree-invariance", || {
        let boxr = Region::Box {
            lo: vec![-2.0, -2.0],
            hi: vec![0.5, 2.0],
        };
        let spec = bundled::circle_with_phi("-cos(t)", "-sin(t)");
        let cycle = find_cycle(&spec, &[1.1, 0.0], bundled::circle_section(), TOL, MULT_TOL)?;
        let adj = periodic_adjoint(&spec, &cycle, TOL)?;
        let bf = sample_f(&cycle, &adj, &spec, 256, 64)?;
        let base = aggregate_degree(&spec, &cycle, &adj, &bf, &boxr)?.total;
        for factor in [-1.0, 7.0] {
            let adj2 = adj.rescaled(factor);
            let bf2 = sample_f(&cycle, &adj2, &spec, 256, 64)?;
            let t2 = aggregate_degree(&spec, &cycle, &adj2, &bf2, &boxr)?.total;
            if t2 != base {
                return Ok(Err(format!("total changed under z*{factor}: {base} -> {t2}")));
            }
        }
        Ok(Ok(format!("total {base} invariant under z -> -z, 7z")))
    });

    run(&mut checks, "perturbed-orbit-residual", || {
        let (spec, cycle) = circle_cycle()?;
        let orbit = find_perturbed_orbit(&spec, &cycle, 0.0, 1e-3, TOL)?;
        let ok = orbit.residual <= 1e-9 * (1.0 + norm(&orbit.xi)) && orbit.sup_distance <= 5e-3;
        Ok(if ok {
            Ok(format!(
                "residual {:.2e}, sup distance {:.2e}",
                orbit.residual, orbit.sup_distance
            ))
        } else {
            Err(format!(
                "residual {:.2e}, sup distance {:.2e}",
                orbit.residual, orbit.sup_distance
            ))
        })
    });

    checks
}
