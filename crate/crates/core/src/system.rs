//! Problem definition: autonomous field psi, T-periodic perturbation phi and
//! their symbolic Jacobians, with fast compiled evaluation paths.

use crate::compile::CompiledExpr;
use crate::error::{Error, Result};
use crate::expr::{parse_expression, ExprNode, Var};
use nalgebra::DMatrix;

/// Scratch buffer reused across compiled-expression evaluations.
#[derive(Debug, Default, Clone)]
pub struct EvalScratch {
    stack: Vec<f64>,
}

/// A parsed system `x' = psi(x) + eps * phi(t, x, eps)` with period `T`.
///
/// `psi` must be autonomous (no `t`, no `eps`); `phi` is used T-periodically
/// in `t`: every evaluation reduces the time argument modulo `T` first.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub n: usize,
    pub period: f64,
    pub psi: Vec<ExprNode>,
    pub phi: Vec<ExprNode>,
    /// `psi_jacobian[i][j] = d psi_i / d x_{j+1}`
    pub psi_jacobian: Vec<Vec<ExprNode>>,
    /// `phi_jacobian[i][j] = d phi_i / d x_{j+1}`, used by the perturbed
    /// variational flow
    pub phi_jacobian: Vec<Vec<ExprNode>>,
    psi_c: Vec<CompiledExpr>,
    phi_c: Vec<CompiledExpr>,
    psi_jac_c: Vec<CompiledExpr>,
    phi_jac_c: Vec<CompiledExpr>,
}

impl SystemSpec {
    pub fn new(n: usize, period: f64, psi_src: &[&str], phi_src: &[&str]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSystem {
                message: "dimension must be at least 1".into(),
            });
        }
        if period <= 0.0 || period.is_nan() || !period.is_finite() {
            return Err(Error::InvalidSystem {
                message: format!("period must be positive and finite, got {period}"),
            });
        }
        if psi_src.len() != n || phi_src.len() != n {
            return Err(Error::InvalidSystem {
                message: format!(
                    "expected {n} components, got {} for psi and {} for phi",
                    psi_src.len(),
                    phi_src.len()
                ),
            });
        }
        let psi = psi_src
            .iter()
            .map(|s| parse_expression(s, n))
            .collect::<Result<Vec<_>>>()?;
        for (i, e) in psi.iter().enumerate() {
            if e.references(Var::Time) || e.references(Var::Eps) {
                return Err(Error::InvalidSystem {
                    message: format!(
                        "psi[{}] must be autonomous (no t, no eps): `{}`",
                        i + 1,
                        psi_src[i]
                    ),
                });
            }
        }
        let phi = phi_src
            .iter()
            .map(|s| parse_expression(s, n))
            .collect::<Result<Vec<_>>>()?;

        let psi_jacobian: Vec<Vec<ExprNode>> = psi
            .iter()
            .map(|e| (0..n).map(|j| e.differentiate(Var::State(j))).collect())
            .collect();
        let phi_jacobian: Vec<Vec<ExprNode>> = phi
            .iter()
            .map(|e| (0..n).map(|j| e.differentiate(Var::State(j))).collect())
            .collect();

        let psi_c = psi.iter().map(CompiledExpr::new).collect();
        let phi_c = phi.iter().map(CompiledExpr::new).collect();
        let psi_jac_c = psi_jacobian
            .iter()
            .flat_map(|row| row.iter().map(CompiledExpr::new))
            .collect();
        let phi_jac_c = phi_jacobian
            .iter()
            .flat_map(|row| row.iter().map(CompiledExpr::new))
            .collect();

        Ok(SystemSpec {
            n,
            period,
            psi,
            phi,
            psi_jacobian,
            phi_jacobian,
            psi_c,
            phi_c,
            psi_jac_c,
            phi_jac_c,
        })
    }

    /// Same system with a different analysis period (used once `period_solve`
    /// has produced the least period).
    pub fn with_period(&self, period: f64) -> Result<Self> {
        let mut out = self.clone();
        if period <= 0.0 || period.is_nan() || !period.is_finite() {
            return Err(Error::InvalidSystem {
                message: format!("period must be positive and finite, got {period}"),
            });
        }
        out.period = period;
        Ok(out)
    }

    #[inline]
    pub fn reduce_time(&self, t: f64) -> f64 {
        t.rem_euclid(self.period)
    }

    pub fn eval_psi_into(&self, x: &[f64], out: &mut [f64], s: &mut EvalScratch) {
        for (i, c) in self.psi_c.iter().enumerate() {
            out[i] = c.eval(0.0, x, 0.0, &mut s.stack);
        }
    }

    pub fn eval_psi(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut s = EvalScratch::default();
        self.eval_psi_into(x, &mut out, &mut s);
        out
    }

    /// Row-major n*n Jacobian of psi at `x`.
    pub fn eval_psi_jac_into(&self, x: &[f64], out: &mut [f64], s: &mut EvalScratch) {
        for (k, c) in self.psi_jac_c.iter().enumerate() {
            out[k] = c.eval(0.0, x, 0.0, &mut s.stack);
        }
    }

    pub fn psi_jacobian_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let mut flat = vec![0.0; self.n * self.n];
        let mut s = EvalScratch::default();
        self.eval_psi_jac_into(x, &mut flat, &mut s);
        DMatrix::from_row_slice(self.n, self.n, &flat)
    }

    /// phi(t, x, eps) with `t` reduced modulo the period.
    pub fn eval_phi_into(&self, t: f64, x: &[f64], eps: f64, out: &mut [f64], s: &mut EvalScratch) {
        let tr = self.reduce_time(t);
        for (i, c) in self.phi_c.iter().enumerate() {
            out[i] = c.eval(tr, x, eps, &mut s.stack);
        }
    }

    pub fn eval_phi(&self, t: f64, x: &[f64], eps: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut s = EvalScratch::default();
        self.eval_phi_into(t, x, eps, &mut out, &mut s);
        out
    }

    /// Row-major n*n Jacobian of phi with respect to x.
    pub fn eval_phi_jac_into(&self, t: f64, x: &[f64], eps: f64, out: &mut [f64], s: &mut EvalScratch) {
        let tr = self.reduce_time(t);
        for (k, c) in self.phi_jac_c.iter().enumerate() {
            out[k] = c.eval(tr, x, eps, &mut s.stack);
        }
    }

    /// psi(x) + eps*phi(t, x, eps); phi is not touched at eps = 0.
    pub fn eval_perturbed_into(
        &self,
        t: f64,
        x: &[f64],
        eps: f64,
        out: &mut [f64],
        s: &mut EvalScratch,
    ) {
        if eps == 0.0 {
            self.eval_psi_into(x, out, s);
            return;
        }
        let tr = self.reduce_time(t);
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let a = self.psi_c[i].eval(0.0, x, 0.0, &mut s.stack);
            let b = self.phi_c[i].eval(tr, x, eps, &mut s.stack);
            *o = a + eps * b;
        }
    }

    /// Re-evaluates phi through the tree walker to produce a precise
    /// NonFiniteValue report after the compiled path saw a non-finite number.
    pub fn explain_phi_nonfinite(&self, t: f64, x: &[f64], eps: f64) -> Error {
        let tr = self.reduce_time(t);
        for e in &self.phi {
            if let Err(err) = e.evaluate(tr, x, eps) {
                return err;
            }
        }
        Error::NonFiniteValue {
            subexpression: "phi".into(),
        }
    }
}
