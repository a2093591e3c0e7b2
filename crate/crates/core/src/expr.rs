//! Arithmetic expressions over named variables, with forward-mode gradients.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, `pi`,
//! and the calls `sqrt abs exp ln sin cos max min`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
    Exp,
    Ln,
    Sin,
    Cos,
    Max,
    Min,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "max" => Func::Max,
            "min" => Func::Min,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Max => "max",
            Func::Min => "min",
        }
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            Func::Max | Func::Min => n >= 2,
            _ => n == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Value together with its gradient with respect to all variables.
#[derive(Debug, Clone)]
struct Dual {
    v: f64,
    d: Vec<f64>,
}

impl Dual {
    fn constant(v: f64, n: usize) -> Dual {
        Dual { v, d: vec![0.0; n] }
    }

    fn map(&self, v: f64, slope: f64) -> Dual {
        Dual {
            v,
            d: self
                .d
                .iter()
                .map(|x| if *x == 0.0 { 0.0 } else { x * slope })
                .collect(),
        }
    }

    fn has_zero_gradient(&self) -> bool {
        self.d.iter().all(|x| *x == 0.0)
    }
}

impl Expr {
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected token {:?} in `{src}`",
                p.tokens[p.pos]
            )));
        }
        Ok(e)
    }

    /// Largest variable index used plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) => a.arity(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.arity().max(b.arity()),
            Expr::Call(_, args) => args.iter().map(|a| a.arity()).max().unwrap_or(0),
        }
    }

    pub fn depends_on(&self, var: usize) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(i) => *i == var,
            Expr::Neg(a) => a.depends_on(var),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on(var) || b.depends_on(var),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(var)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => pow(a.eval(x), b.eval(x)),
            Expr::Call(f, args) => {
                let v: Vec<f64> = args.iter().map(|a| a.eval(x)).collect();
                match f {
                    Func::Sqrt => v[0].sqrt(),
                    Func::Abs => v[0].abs(),
                    Func::Exp => v[0].exp(),
                    Func::Ln => v[0].ln(),
                    Func::Sin => v[0].sin(),
                    Func::Cos => v[0].cos(),
                    Func::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Func::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
                }
            }
        }
    }

    /// Value and gradient in `n` variables. At points where the expression is
    /// not differentiable (a kink of `abs`, `max`, `min`, or the origin of
    /// `sqrt`) the gradient contains non-finite entries.
    pub fn eval_grad(&self, x: &[f64], n: usize) -> (f64, Vec<f64>) {
        let d = self.dual(x, n);
        (d.v, d.d)
    }

    fn dual(&self, x: &[f64], n: usize) -> Dual {
        match self {
            Expr::Const(c) => Dual::constant(*c, n),
            Expr::Var(i) => {
                let mut d = vec![0.0; n];
                if *i < n {
                    d[*i] = 1.0;
                }
                Dual {
                    v: x.get(*i).copied().unwrap_or(f64::NAN),
                    d,
                }
            }
            Expr::Neg(a) => {
                let a = a.dual(x, n);
                a.map(-a.v, -1.0)
            }
            Expr::Add(a, b) => {
                let (a, b) = (a.dual(x, n), b.dual(x, n));
                Dual {
                    v: a.v + b.v,
                    d: a.d.iter().zip(&b.d).map(|(p, q)| p + q).collect(),
                }
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.dual(x, n), b.dual(x, n));
                Dual {
                    v: a.v - b.v,
                    d: a.d.iter().zip(&b.d).map(|(p, q)| p - q).collect(),
                }
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.dual(x, n), b.dual(x, n));
                Dual {
                    v: a.v * b.v,
                    d: a.d
                        .iter()
                        .zip(&b.d)
                        .map(|(p, q)| lin(*p, b.v) + lin(*q, a.v))
                        .collect(),
                }
            }
            Expr::Div(a, b) => {
                let (a, b) = (a.dual(x, n), b.dual(x, n));
                let v = a.v / b.v;
                Dual {
                    v,
                    d: a.d
                        .iter()
                        .zip(&b.d)
                        .map(|(p, q)| (lin(*p, 1.0) - lin(*q, v)) / b.v)
                        .collect(),
                }
            }
            Expr::Pow(a, b) => {
                let (a, b) = (a.dual(x, n), b.dual(x, n));
                let v = pow(a.v, b.v);
                if b.has_zero_gradient() {
                    // Constant exponent: d(a^c) = c a^(c-1) da.
                    let slope = if b.v == 0.0 {
                        0.0
                    } else {
                        b.v * pow(a.v, b.v - 1.0)
                    };
                    a.map(v, slope)
                } else {
                    let la = a.v.ln();
                    Dual {
                        v,
                        d: a.d
                            .iter()
                            .zip(&b.d)
                            .map(|(p, q)| v * (lin(*q, la) + lin(*p, b.v / a.v)))
                            .collect(),
                    }
                }
            }
            Expr::Call(f, args) => {
                let ds: Vec<Dual> = args.iter().map(|a| a.dual(x, n)).collect();
                let a = &ds[0];
                match f {
                    Func::Sqrt => {
                        let v = a.v.sqrt();
                        a.map(v, 0.5 / v)
                    }
                    Func::Abs => {
                        if a.v > 0.0 {
                            a.map(a.v, 1.0)
                        } else if a.v < 0.0 {
                            a.map(-a.v, -1.0)
                        } else if a.has_zero_gradient() {
                            a.map(0.0, 0.0)
                        } else {
                            a.map(0.0, f64::NAN)
                        }
                    }
                    Func::Exp => a.map(a.v.exp(), a.v.exp()),
                    Func::Ln => a.map(a.v.ln(), 1.0 / a.v),
                    Func::Sin => a.map(a.v.sin(), a.v.cos()),
                    Func::Cos => a.map(a.v.cos(), -a.v.sin()),
                    Func::Max | Func::Min => {
                        let better = |p: f64, q: f64| if *f == Func::Max { p > q } else { p < q };
                        let mut best = 0;
                        for (i, d) in ds.iter().enumerate() {
                            if better(d.v, ds[best].v) {
                                best = i;
                            }
                        }
                        let ties: Vec<&Dual> = ds.iter().filter(|d| d.v == ds[best].v).collect();
                        let same = ties.iter().all(|d| d.d == ds[best].d);
                        if same {
                            ds[best].clone()
                        } else {
                            ds[best].map(ds[best].v, f64::NAN)
                        }
                    }
                }
            }
        }
    }
}

/// Product of a derivative with a value, with `0·∞ = 0` so that terms not
/// depending on a variable never poison its partial derivative.
fn lin(d: f64, v: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d * v
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == 2.0 {
        a * a
    } else if b.fract() == 0.0 && b.abs() < 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "v{i}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number `{s}`")))?;
            out.push(Token::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Token::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            // Right associative; the exponent may carry its own sign.
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(Error::Expression("missing `)`".into()));
                }
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    let f = Func::from_name(&name)
                        .ok_or_else(|| Error::Expression(format!("unknown function `{name}`")))?;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    if !self.eat(')') {
                        return Err(Error::Expression(format!("missing `)` after {name}(")));
                    }
                    if !f.arity_ok(args.len()) {
                        return Err(Error::Expression(format!(
                            "{name} does not take {} arguments",
                            args.len()
                        )));
                    }
                    return Ok(Expr::Call(f, args));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                self.vars
                    .iter()
                    .position(|v| *v == name)
                    .map(Expr::Var)
                    .ok_or_else(|| Error::Expression(format!("unknown variable `{name}`")))
            }
            other => Err(Error::Expression(format!("unexpected {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_power() {
        let e = Expr::parse("1 + 2*x^2 - -3", &["x"]).unwrap();
        assert_eq!(e.eval(&[2.0]), 12.0);
        let e = Expr::parse("-x^2", &["x"]).unwrap();
        assert_eq!(e.eval(&[3.0]), -9.0);
        let e = Expr::parse("2^-1", &[]).unwrap();
        assert_eq!(e.eval(&[]), 0.5);
        let e = Expr::parse("1.5e-1*x", &["x"]).unwrap();
        assert!((e.eval(&[2.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn gradients() {
        let e = Expr::parse("x1^2 * x2 + sin(x2)", &["x1", "x2"]).unwrap();
        let (v, g) = e.eval_grad(&[1.0, 0.0], 2);
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 2.0]);
        let e = Expr::parse("max(x, 2*x)", &["x"]).unwrap();
        assert_eq!(e.eval_grad(&[1.0], 1).1, vec![2.0]);
        assert!(e.eval_grad(&[0.0], 1).1[0].is_nan());
    }

    #[test]
    fn kinks_are_flagged() {
        let e = Expr::parse("sqrt(abs(x)) + 1", &["x"]).unwrap();
        assert!(!e.eval_grad(&[0.0], 1).1[0].is_finite());
        assert!((e.eval_grad(&[0.25], 1).1[0] - 1.0).abs() < 1e-12);
        // A constant argument is smooth even at zero.
        let e = Expr::parse("abs(0*x) + x", &["x"]).unwrap();
        assert_eq!(e.eval_grad(&[0.0], 1).1, vec![1.0]);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("x +", &["x"]).is_err());
        assert!(Expr::parse("q", &["x"]).is_err());
        assert!(Expr::parse("foo(x)", &["x"]).is_err());
        assert!(Expr::parse("max(x)", &["x"]).is_err());
        assert!(Expr::parse("(x", &["x"]).is_err());
    }
}
