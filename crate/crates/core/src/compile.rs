//! Flat postfix form of an expression tree for fast repeated evaluation
//! inside integrator right-hand sides. Semantically identical to
//! [`ExprNode::evaluate`](crate::expr::ExprNode::evaluate) except that
//! non-finite values are returned as-is; integration loops watch for them
//! at the state level.

use crate::expr::{BinaryOp, ExprNode, UnaryOp, Var};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Time,
    Eps,
    State(usize),
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Signum,
    Add,
    Sub,
    Mul,
    Div,
    PowI(i32),
}

#[derive(Debug, Clone)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    max_depth: usize,
}

impl CompiledExpr {
    pub fn new(e: &ExprNode) -> Self {
        let mut ops = Vec::new();
        emit(e, &mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Time | Op::Eps | Op::State(_) => depth += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div => depth -= 1,
                _ => {}
            }
            max_depth = max_depth.max(depth);
        }
        CompiledExpr { ops, max_depth }
    }

    pub fn eval(&self, t: f64, x: &[f64], eps: f64, stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        stack.reserve(self.max_depth);
        for op in &self.ops {
            match op {
                Op::Const(c) => stack.push(*c),
                Op::Time => stack.push(t),
                Op::Eps => stack.push(eps),
                Op::State(i) => stack.push(x[*i]),
                Op::Neg => {
                    let a = stack.last_mut().unwrap();
                    *a = -*a;
                }
                Op::Sin => {
                    let a = stack.last_mut().unwrap();
                    *a = a.sin();
                }
                Op::Cos => {
                    let a = stack.last_mut().unwrap();
                    *a = a.cos();
                }
                Op::Tan => {
                    let a = stack.last_mut().unwrap();
                    *a = a.tan();
                }
                Op::Exp => {
                    let a = stack.last_mut().unwrap();
                    *a = a.exp();
                }
                Op::Log => {
                    let a = stack.last_mut().unwrap();
                    *a = a.ln();
                }
                Op::Sqrt => {
                    let a = stack.last_mut().unwrap();
                    *a = a.sqrt();
                }
                Op::Abs => {
                    let a = stack.last_mut().unwrap();
                    *a = a.abs();
                }
                Op::Signum => {
                    let a = stack.last_mut().unwrap();
                    *a = if *a == 0.0 { 0.0 } else { a.signum() };
                }
                Op::Add => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a += b;
                }
                Op::Sub => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a -= b;
                }
                Op::Mul => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a *= b;
                }
                Op::Div => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a /= b;
                }
                Op::PowI(k) => {
                    let a = stack.last_mut().unwrap();
                    *a = a.powi(*k);
                }
            }
        }
        stack.pop().unwrap()
    }
}

fn emit(e: &ExprNode, out: &mut Vec<Op>) {
    match e {
        ExprNode::Constant(c) => out.push(Op::Const(*c)),
        ExprNode::Variable(Var::Time) => out.push(Op::Time),
        ExprNode::Variable(Var::Eps) => out.push(Op::Eps),
        ExprNode::Variable(Var::State(i)) => out.push(Op::State(*i)),
        ExprNode::Unary(op, a) => {
            emit(a, out);
            out.push(match op {
                UnaryOp::Neg => Op::Neg,
                UnaryOp::Sin => Op::Sin,
                UnaryOp::Cos => Op::Cos,
                UnaryOp::Tan => Op::Tan,
                UnaryOp::Exp => Op::Exp,
                UnaryOp::Log => Op::Log,
                UnaryOp::Sqrt => Op::Sqrt,
                UnaryOp::Abs => Op::Abs,
                UnaryOp::Signum => Op::Signum,
            });
        }
        ExprNode::Binary(op, a, b) => {
            emit(a, out);
            emit(b, out);
            out.push(match op {
                BinaryOp::Add => Op::Add,
                BinaryOp::Sub => Op::Sub,
                BinaryOp::Mul => Op::Mul,
                BinaryOp::Div => Op::Div,
            });
        }
        ExprNode::Pow(a, k) => {
            emit(a, out);
            out.push(Op::PowI(*k));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    #[test]
    fn matches_tree_evaluation() {
        let sources = [
            "x1*x2 + sin(t) - eps*cos(x1)",
            "-x2 + x1*(1 - x1^2 - x2^2)",
            "exp(x1/4)*sqrt(x2 + 3) + tan(t/5)",
            "abs(x1 - x2)^3",
        ];
        let mut rng = crate::lcg::Lcg::new(11);
        let mut stack = Vec::new();
        for src in sources {
            let e = parse_expression(src, 2).unwrap();
            let c = CompiledExpr::new(&e);
            for _ in 0..200 {
                let t = rng.next_in(-3.0, 3.0);
                let eps = rng.next_f64();
                let x = [rng.next_in(-2.0, 2.0), rng.next_in(-2.0, 2.0)];
                let tree = e.evaluate(t, &x, eps).unwrap();
                let flat = c.eval(t, &x, eps, &mut stack);
                assert_eq!(tree, flat, "{src}");
            }
        }
    }
}
