//! Scalar math expressions over `t`, `x1..xn`, `eps`: parsing, evaluation and
//! exact symbolic differentiation.
//!
//! Grammar (bit-exact):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | base ('^' integer)?
//! base   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x1^2` is `-(x1^2)`. Exponents are
//! restricted to integer constants, which keeps derivatives closed-form.
//! Numbers are decimal with an optional exponent (`1.5e-3`).
//!
//! Trees are immutable after construction and safe to evaluate concurrently.

use crate::error::{Error, Result};
use std::fmt;

/// Variable of an expression; state variables are 0-indexed internally and
/// printed 1-indexed (`x1..xn`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Time,
    Eps,
    State(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    /// Internal only: produced when differentiating `abs` (sign(0) = 0).
    /// Never accepted by the parser.
    Signum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree. `Pow` carries its integer exponent directly so the
/// restriction to integer powers is structural.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprNode {
    Constant(f64),
    Variable(Var),
    Unary(UnaryOp, Box<ExprNode>),
    Binary(BinaryOp, Box<ExprNode>, Box<ExprNode>),
    Pow(Box<ExprNode>, i32),
}

impl ExprNode {
    pub fn constant(v: f64) -> Self {
        ExprNode::Constant(v)
    }

    /// Evaluate in IEEE double precision. A non-finite intermediate value is
    /// reported with the offending subexpression instead of being propagated.
    pub fn evaluate(&self, t: f64, x: &[f64], eps: f64) -> Result<f64> {
        let v = match self {
            ExprNode::Constant(c) => *c,
            ExprNode::Variable(Var::Time) => t,
            ExprNode::Variable(Var::Eps) => eps,
            ExprNode::Variable(Var::State(i)) => x[*i],
            ExprNode::Unary(op, a) => apply_unary(*op, a.evaluate(t, x, eps)?),
            ExprNode::Binary(op, a, b) => {
                apply_binary(*op, a.evaluate(t, x, eps)?, b.evaluate(t, x, eps)?)
            }
            ExprNode::Pow(a, k) => a.evaluate(t, x, eps)?.powi(*k),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteValue {
                subexpression: self.to_string(),
            })
        }
    }

    /// Exact symbolic derivative with respect to `var`. The result is left
    /// unsimplified apart from constant folding.
    pub fn differentiate(&self, var: Var) -> ExprNode {
        match self {
            ExprNode::Constant(_) => ExprNode::Constant(0.0),
            ExprNode::Variable(v) => {
                ExprNode::Constant(if *v == var { 1.0 } else { 0.0 })
            }
            ExprNode::Unary(op, a) => {
                let da = a.differentiate(var);
                match op {
                    UnaryOp::Neg => neg(da),
                    UnaryOp::Sin => mul(ExprNode::Unary(UnaryOp::Cos, a.clone()), da),
                    UnaryOp::Cos => neg(mul(ExprNode::Unary(UnaryOp::Sin, a.clone()), da)),
                    UnaryOp::Tan => {
                        // d tan u = u' / cos(u)^2
                        let c = ExprNode::Unary(UnaryOp::Cos, a.clone());
                        div(da, ExprNode::Pow(Box::new(c), 2))
                    }
                    UnaryOp::Exp => mul(ExprNode::Unary(UnaryOp::Exp, a.clone()), da),
                    UnaryOp::Log => div(da, (**a).clone()),
                    UnaryOp::Sqrt => {
                        let s = ExprNode::Unary(UnaryOp::Sqrt, a.clone());
                        div(da, mul(ExprNode::Constant(2.0), s))
                    }
                    UnaryOp::Abs => mul(ExprNode::Unary(UnaryOp::Signum, a.clone()), da),
                    UnaryOp::Signum => ExprNode::Constant(0.0),
                }
            }
            ExprNode::Binary(op, a, b) => {
                let da = a.differentiate(var);
                let db = b.differentiate(var);
                match op {
                    BinaryOp::Add => add(da, db),
                    BinaryOp::Sub => sub(da, db),
                    BinaryOp::Mul => add(mul(da, (**b).clone()), mul((**a).clone(), db)),
                    BinaryOp::Div => {
                        // (u'v - uv') / v^2
                        let num = sub(mul(da, (**b).clone()), mul((**a).clone(), db));
                        div(num, ExprNode::Pow(Box::new((**b).clone()), 2))
                    }
                }
            }
            ExprNode::Pow(a, k) => {
                if *k == 0 {
                    return ExprNode::Constant(0.0);
                }
                let da = a.differentiate(var);
                let inner = if *k == 1 {
                    ExprNode::Constant(1.0)
                } else {
                    ExprNode::Pow(Box::new((**a).clone()), *k - 1)
                };
                mul(mul(ExprNode::Constant(*k as f64), inner), da)
            }
        }
    }

    /// True if the tree references `var` anywhere.
    pub fn references(&self, var: Var) -> bool {
        match self {
            ExprNode::Constant(_) => false,
            ExprNode::Variable(v) => *v == var,
            ExprNode::Unary(_, a) => a.references(var),
            ExprNode::Binary(_, a, b) => a.references(var) || b.references(var),
            ExprNode::Pow(a, _) => a.references(var),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprNode::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            ExprNode::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            ExprNode::Unary(UnaryOp::Neg, _) => 3,
            ExprNode::Pow(..) => 4,
            ExprNode::Constant(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            _ => 5,
        }
    }
}

fn apply_unary(op: UnaryOp, a: f64) -> f64 {
    match op {
        UnaryOp::Neg => -a,
        UnaryOp::Sin => a.sin(),
        UnaryOp::Cos => a.cos(),
        UnaryOp::Tan => a.tan(),
        UnaryOp::Exp => a.exp(),
        UnaryOp::Log => a.ln(),
        UnaryOp::Sqrt => a.sqrt(),
        UnaryOp::Abs => a.abs(),
        UnaryOp::Signum => {
            if a == 0.0 {
                0.0
            } else {
                a.signum()
            }
        }
    }
}

fn apply_binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / b,
    }
}

// Smart constructors used by `differentiate`. They fold constant subtrees
// (including the 0/1 identities that would otherwise bloat derivative trees)
// but are never applied to user-parsed input, so evaluation semantics of
// parsed text are untouched.

fn fold2(op: BinaryOp, a: ExprNode, b: ExprNode) -> ExprNode {
    if let (ExprNode::Constant(x), ExprNode::Constant(y)) = (&a, &b) {
        let v = apply_binary(op, *x, *y);
        if v.is_finite() {
            return ExprNode::Constant(v);
        }
    }
    ExprNode::Binary(op, Box::new(a), Box::new(b))
}

fn add(a: ExprNode, b: ExprNode) -> ExprNode {
    match (&a, &b) {
        (ExprNode::Constant(c), _) if *c == 0.0 => b,
        (_, ExprNode::Constant(c)) if *c == 0.0 => a,
        _ => fold2(BinaryOp::Add, a, b),
    }
}

fn sub(a: ExprNode, b: ExprNode) -> ExprNode {
    match (&a, &b) {
        (_, ExprNode::Constant(c)) if *c == 0.0 => a,
        (ExprNode::Constant(c), _) if *c == 0.0 => neg(b),
        _ => fold2(BinaryOp::Sub, a, b),
    }
}

fn mul(a: ExprNode, b: ExprNode) -> ExprNode {
    match (&a, &b) {
        (ExprNode::Constant(c), _) if *c == 0.0 => ExprNode::Constant(0.0),
        (_, ExprNode::Constant(c)) if *c == 0.0 => ExprNode::Constant(0.0),
        (ExprNode::Constant(c), _) if *c == 1.0 => b,
        (_, ExprNode::Constant(c)) if *c == 1.0 => a,
        _ => fold2(BinaryOp::Mul, a, b),
    }
}

fn div(a: ExprNode, b: ExprNode) -> ExprNode {
    match (&a, &b) {
        (ExprNode::Constant(c), _) if *c == 0.0 => ExprNode::Constant(0.0),
        (_, ExprNode::Constant(c)) if *c == 1.0 => a,
        _ => fold2(BinaryOp::Div, a, b),
    }
}

fn neg(a: ExprNode) -> ExprNode {
    if let ExprNode::Constant(c) = &a {
        return ExprNode::Constant(-c);
    }
    ExprNode::Unary(UnaryOp::Neg, Box::new(a))
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Time => write!(f, "t"),
            Var::Eps => write!(f, "eps"),
            Var::State(i) => write!(f, "x{}", i + 1),
        }
    }
}

impl fmt::Display for ExprNode {
    /// Pretty-print with the minimal parenthesization that re-parses to an
    /// evaluation-equivalent tree (right operands of binary ops are wrapped
    /// whenever associativity could regroup them).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap(f: &mut fmt::Formatter<'_>, e: &ExprNode, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "(")?;
                write!(f, "{e}")?;
                write!(f, ")")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            ExprNode::Constant(c) => write!(f, "{c}"),
            ExprNode::Variable(v) => write!(f, "{v}"),
            ExprNode::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                wrap(f, a, a.precedence() < 3)
            }
            ExprNode::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Tan => "tan",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Log => "log",
                    UnaryOp::Sqrt => "sqrt",
                    UnaryOp::Abs => "abs",
                    UnaryOp::Signum => "sign",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({a})")
            }
            ExprNode::Binary(op, a, b) => {
                let (sym, prec) = match op {
                    BinaryOp::Add => ("+", 1),
                    BinaryOp::Sub => ("-", 1),
                    BinaryOp::Mul => ("*", 2),
                    BinaryOp::Div => ("/", 2),
                };
                wrap(f, a, a.precedence() < prec)?;
                write!(f, " {sym} ")?;
                wrap(f, b, b.precedence() <= prec)
            }
            ExprNode::Pow(a, k) => {
                // pow binds tightest, so only grammar-level atoms may appear
                // unparenthesized as the base; a negated base in particular
                // must be wrapped (`(-x1)^2`, not `-x1^2`)
                let atom = match a.as_ref() {
                    ExprNode::Variable(_) => true,
                    ExprNode::Constant(c) => *c >= 0.0 && !c.is_sign_negative(),
                    ExprNode::Unary(UnaryOp::Neg, _) => false,
                    ExprNode::Unary(..) => true,
                    _ => false,
                };
                wrap(f, a, !atom)?;
                write!(f, "^{k}")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool), // value, lexeme was integral (no '.'/exponent)
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(text: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer {
            src: text.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            lx.skip_ws();
            if lx.pos >= lx.src.len() {
                break;
            }
            let start = lx.pos;
            let c = lx.src[lx.pos];
            let tok = match c {
                b'+' => {
                    lx.pos += 1;
                    Tok::Plus
                }
                b'-' => {
                    lx.pos += 1;
                    Tok::Minus
                }
                b'*' => {
                    lx.pos += 1;
                    Tok::Star
                }
                b'/' => {
                    lx.pos += 1;
                    Tok::Slash
                }
                b'^' => {
                    lx.pos += 1;
                    Tok::Caret
                }
                b'(' => {
                    lx.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    lx.pos += 1;
                    Tok::RParen
                }
                b'0'..=b'9' | b'.' => lx.number(start)?,
                c if c.is_ascii_alphabetic() || c == b'_' => lx.ident(),
                other => {
                    return Err(Error::Syntax {
                        position: start,
                        message: format!("unexpected character `{}`", other as char),
                    })
                }
            };
            out.push((tok, start));
        }
        Ok(out)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn number(&mut self, start: usize) -> Result<Tok> {
        let mut integral = true;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            integral = false;
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E')
        {
            // exponent only if followed by digits (optionally signed); otherwise
            // the `e` starts an identifier such as `eps`
            let mut probe = self.pos + 1;
            if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                integral = false;
                self.pos = probe;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| Error::Syntax {
            position: start,
            message: format!("malformed number `{text}`"),
        })?;
        Ok(Tok::Num(value, integral))
    }

    fn ident(&mut self) -> Tok {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        Tok::Ident(std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string())
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    dimension: usize,
    end: usize,
}

/// Parse `text` as an expression over `t`, `eps`, `x1..xn`.
pub fn parse_expression(text: &str, dimension: usize) -> Result<ExprNode> {
    assert!(dimension >= 1, "dimension must be at least 1");
    let toks = Lexer::tokens(text)?;
    let mut p = Parser {
        toks,
        idx: 0,
        dimension,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.idx < p.toks.len() {
        return Err(Error::Syntax {
            position: p.toks[p.idx].1,
            message: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(t, _)| t.clone());
        self.idx += 1;
        t
    }

    fn expr(&mut self) -> Result<ExprNode> {
        let mut node = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.term()?;
                    node = ExprNode::Binary(BinaryOp::Add, Box::new(node), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.term()?;
                    node = ExprNode::Binary(BinaryOp::Sub, Box::new(node), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(self.fold(node))
    }

    fn term(&mut self) -> Result<ExprNode> {
        let mut node = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let rhs = self.factor()?;
                    node = ExprNode::Binary(BinaryOp::Mul, Box::new(node), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    let rhs = self.factor()?;
                    node = ExprNode::Binary(BinaryOp::Div, Box::new(node), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(node)
    }

    fn factor(&mut self) -> Result<ExprNode> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.factor()?;
            return Ok(ExprNode::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        let base = self.base()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let k = self.integer_exponent()?;
            return Ok(ExprNode::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn integer_exponent(&mut self) -> Result<i32> {
        let position = self.pos();
        let sign = if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            -1
        } else {
            1
        };
        match self.bump() {
            Some(Tok::Num(v, true)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                Ok(sign * v as i32)
            }
            _ => Err(Error::Syntax {
                position,
                message: "exponent must be an integer constant".into(),
            }),
        }
    }

    fn base(&mut self) -> Result<ExprNode> {
        let position = self.pos();
        match self.bump() {
            Some(Tok::Num(v, _)) => Ok(ExprNode::Constant(v)),
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    self.bump();
                    let func = match name.as_str() {
                        "sin" => UnaryOp::Sin,
                        "cos" => UnaryOp::Cos,
                        "tan" => UnaryOp::Tan,
                        "exp" => UnaryOp::Exp,
                        "log" => UnaryOp::Log,
                        "sqrt" => UnaryOp::Sqrt,
                        "abs" => UnaryOp::Abs,
                        _ => return Err(Error::UnknownFunction { position, name }),
                    };
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(ExprNode::Unary(func, Box::new(arg)))
                } else {
                    self.variable(&name, position)
                }
            }
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            _ => Err(Error::Syntax {
                position,
                message: "expected number, identifier or `(`".into(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        let position = self.pos();
        match self.bump() {
            Some(Tok::RParen) => Ok(()),
            _ => Err(Error::Syntax {
                position,
                message: "expected `)`".into(),
            }),
        }
    }

    fn variable(&self, name: &str, position: usize) -> Result<ExprNode> {
        match name {
            "t" => Ok(ExprNode::Variable(Var::Time)),
            "eps" => Ok(ExprNode::Variable(Var::Eps)),
            _ => {
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(i) = rest.parse::<usize>() {
                        if i >= 1 && i <= self.dimension {
                            return Ok(ExprNode::Variable(Var::State(i - 1)));
                        }
                    }
                }
                Err(Error::UnknownVariable {
                    position,
                    name: name.to_string(),
                    dimension: self.dimension,
                })
            }
        }
    }

    /// Constant folding of fully-constant subtrees (finite results only);
    /// the single post-parse simplification we apply.
    fn fold(&self, e: ExprNode) -> ExprNode {
        match e {
            ExprNode::Unary(op, a) => {
                let a = self.fold(*a);
                if let ExprNode::Constant(c) = a {
                    let v = apply_unary(op, c);
                    if v.is_finite() {
                        return ExprNode::Constant(v);
                    }
                    return ExprNode::Unary(op, Box::new(ExprNode::Constant(c)));
                }
                ExprNode::Unary(op, Box::new(a))
            }
            ExprNode::Binary(op, a, b) => {
                let a = self.fold(*a);
                let b = self.fold(*b);
                if let (ExprNode::Constant(x), ExprNode::Constant(y)) = (&a, &b) {
                    let v = apply_binary(op, *x, *y);
                    if v.is_finite() {
                        return ExprNode::Constant(v);
                    }
                }
                ExprNode::Binary(op, Box::new(a), Box::new(b))
            }
            ExprNode::Pow(a, k) => {
                let a = self.fold(*a);
                if let ExprNode::Constant(c) = a {
                    let v = c.powi(k);
                    if v.is_finite() {
                        return ExprNode::Constant(v);
                    }
                    return ExprNode::Pow(Box::new(ExprNode::Constant(c)), k);
                }
                ExprNode::Pow(Box::new(a), k)
            }
            other => other,
        }
    }
}

/// Convenience free function mirroring [`ExprNode::evaluate`].
pub fn evaluate(e: &ExprNode, t: f64, x: &[f64], eps: f64) -> Result<f64> {
    e.evaluate(t, x, eps)
}

/// Convenience free function mirroring [`ExprNode::differentiate`].
pub fn differentiate(e: &ExprNode, var: Var) -> ExprNode {
    e.differentiate(var)
}
