//! Radial potentials `V(r)`: constants or expressions in `r`.
//!
//! Expression grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          right-associative
//! atom   := number | 'r' | ('exp' | 'log') '(' expr ')' | '(' expr ')'
//! number := digits ['.' digits] [('e' | 'E') ['+' | '-'] digits]
//! ```
//!
//! `log` is the natural logarithm.

use std::fmt;

use crate::error::{Error, Result};
use crate::radial::RadialDomain;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    R,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::R => r,
            Expr::Neg(a) => -a.eval(r),
            Expr::Add(a, b) => a.eval(r) + b.eval(r),
            Expr::Sub(a, b) => a.eval(r) - b.eval(r),
            Expr::Mul(a, b) => a.eval(r) * b.eval(r),
            Expr::Div(a, b) => a.eval(r) / b.eval(r),
            Expr::Pow(a, b) => a.eval(r).powf(b.eval(r)),
            Expr::Exp(a) => a.eval(r).exp(),
            Expr::Log(a) => a.eval(r).ln(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::R => false,
            Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) => a.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    /// Symbolic derivative with respect to `r`.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        let b = Box::new;
        if self.is_constant() {
            return Num(0.0);
        }
        match self {
            Num(_) => Num(0.0),
            R => Num(1.0),
            Neg(a) => Neg(b(a.derivative())),
            Add(x, y) => Add(b(x.derivative()), b(y.derivative())),
            Sub(x, y) => Sub(b(x.derivative()), b(y.derivative())),
            Mul(x, y) => Add(
                b(Mul(b(x.derivative()), y.clone())),
                b(Mul(x.clone(), b(y.derivative()))),
            ),
            Div(x, y) => Div(
                b(Sub(
                    b(Mul(b(x.derivative()), y.clone())),
                    b(Mul(x.clone(), b(y.derivative()))),
                )),
                b(Pow(y.clone(), b(Num(2.0)))),
            ),
            Pow(x, y) if y.is_constant() => Mul(
                b(Mul(y.clone(), b(Pow(x.clone(), b(Sub(y.clone(), b(Num(1.0)))))))),
                b(x.derivative()),
            ),
            Pow(x, y) => Mul(
                b(self.clone()),
                b(Add(
                    b(Mul(b(y.derivative()), b(Log(x.clone())))),
                    b(Div(b(Mul(y.clone(), b(x.derivative()))), x.clone())),
                )),
            ),
            Exp(x) => Mul(b(self.clone()), b(x.derivative())),
            Log(x) => Div(b(x.derivative()), x.clone()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Expression {
            column: self.pos + 1,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                match word {
                    "r" => Ok(Expr::R),
                    "exp" | "log" => {
                        if !self.eat(b'(') {
                            return Err(self.err("expected '(' after function name"));
                        }
                        let arg = self.expr()?;
                        if !self.eat(b')') {
                            return Err(self.err("expected ')'"));
                        }
                        Ok(if word == "exp" {
                            Expr::Exp(Box::new(arg))
                        } else {
                            Expr::Log(Box::new(arg))
                        })
                    }
                    _ => {
                        self.pos = start;
                        Err(self.err(&format!("unknown identifier `{word}`")))
                    }
                }
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Num).map_err(|_| {
            self.pos = start;
            self.err(&format!("bad number `{text}`"))
        })
    }
}

/// How `V` was specified.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Const(f64),
    Expr { source: String, expr: Expr },
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Const(c) => write!(f, "const {c:?}"),
            PotentialSpec::Expr { source, .. } => write!(f, "expr {source}"),
        }
    }
}

impl PotentialSpec {
    /// Parses `const <value>` or `expr <expression>`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (kind, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let rest = rest.trim();
        match kind {
            "const" => rest.parse::<f64>().map(PotentialSpec::Const).map_err(|_| Error::Expression {
                column: kind.len() + 2,
                message: format!("bad constant `{rest}`"),
            }),
            "expr" => Ok(PotentialSpec::Expr {
                source: rest.to_string(),
                expr: Expr::parse(rest)?,
            }),
            _ => Err(Error::Expression {
                column: 1,
                message: format!("potential must start with `const` or `expr`, found `{kind}`"),
            }),
        }
    }
}

/// A continuous radial potential with its declared lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub spec: PotentialSpec,
    pub declared_floor: f64,
}

/// Samples used to estimate `inf V` when no floor is declared.
const FLOOR_SAMPLES: usize = 4097;

impl Potential {
    pub fn constant(value: f64) -> Self {
        Self {
            spec: PotentialSpec::Const(value),
            declared_floor: value,
        }
    }

    /// Builds a potential; without an explicit floor, `inf V` is estimated by
    /// sampling the domain.
    pub fn new(spec: PotentialSpec, floor: Option<f64>, domain: &RadialDomain) -> Result<Self> {
        let sampled = {
            let (a, b) = (domain.inner(), domain.outer());
            let mut min = f64::INFINITY;
            for k in 0..FLOOR_SAMPLES {
                let r = a + (b - a) * k as f64 / (FLOOR_SAMPLES - 1) as f64;
                let v = eval_spec(&spec, r);
                if !v.is_finite() {
                    return Err(Error::InvalidProblem(format!("V is not finite at r = {r}")));
                }
                min = min.min(v);
            }
            min
        };
        let declared_floor = match floor {
            Some(f) if f > sampled => {
                return Err(Error::InvalidProblem(format!(
                    "declared floor {f} exceeds sampled minimum {sampled} of V"
                )))
            }
            Some(f) => f,
            None => sampled,
        };
        Ok(Self { spec, declared_floor })
    }

    pub fn value(&self, r: f64) -> f64 {
        eval_spec(&self.spec, r)
    }

    pub fn is_constant(&self) -> bool {
        match &self.spec {
            PotentialSpec::Const(_) => true,
            PotentialSpec::Expr { expr, .. } => expr.is_constant(),
        }
    }

    /// `r V'(r)`, i.e. `∇V·x` for radial `V`, from the symbolic derivative.
    pub fn radial_drift(&self, r: f64) -> f64 {
        match &self.spec {
            PotentialSpec::Const(_) => 0.0,
            PotentialSpec::Expr { expr, .. } if expr.is_constant() => 0.0,
            PotentialSpec::Expr { expr, .. } => r * expr.derivative().eval(r),
        }
    }
}

fn eval_spec(spec: &PotentialSpec, r: f64) -> f64 {
    match spec {
        PotentialSpec::Const(c) => *c,
        PotentialSpec::Expr { expr, .. } => expr.eval(r),
    }
}

/// `r V'(r)` from node samples by central differences (one-sided at the ends).
pub fn sampled_drift(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|i| {
            let (lo, hi) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            nodes[i] * (values[hi] - values[lo]) / (nodes[hi] - nodes[lo])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("1 + 2*r^2 - exp(-r)/4").unwrap();
        let r: f64 = 1.3;
        assert!((e.eval(r) - (1.0 + 2.0 * r * r - (-r).exp() / 4.0)).abs() < 1e-15);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval(0.0), 512.0);
        let e = Expr::parse("-r^2").unwrap();
        assert_eq!(e.eval(3.0), -9.0);
        let e = Expr::parse("log(r) * 1.5e-1").unwrap();
        assert!((e.eval(std::f64::consts::E) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for src in ["1 + r^2", "exp(-r)*r", "log(1+r)/r", "r^r", "(2+r)^(-1.5)", "3"] {
            let e = Expr::parse(src).unwrap();
            let d = e.derivative();
            for r in [1.1, 1.7, 2.4] {
                let h = 1e-6;
                let fd = (e.eval(r + h) - e.eval(r - h)) / (2.0 * h);
                assert!((d.eval(r) - fd).abs() < 1e-7 * (1.0 + fd.abs()), "{src} at {r}");
            }
        }
    }

    #[test]
    fn parse_errors_carry_columns() {
        match Expr::parse("1 + foo(r)") {
            Err(Error::Expression { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("(1 + r").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("r r").is_err());
    }

    #[test]
    fn potential_specs() {
        let dom = RadialDomain::annulus(3, 1.0, 2.0).unwrap();
        let v = Potential::new(PotentialSpec::parse("const 2.5").unwrap(), None, &dom).unwrap();
        assert_eq!(v.declared_floor, 2.5);
        assert_eq!(v.radial_drift(1.5), 0.0);
        let v = Potential::new(PotentialSpec::parse("expr 1 + r").unwrap(), None, &dom).unwrap();
        assert!((v.declared_floor - 2.0).abs() < 1e-12);
        assert!((v.radial_drift(1.5) - 1.5).abs() < 1e-15);
        assert!(Potential::new(PotentialSpec::parse("expr 1 + r").unwrap(), Some(3.0), &dom).is_err());
        assert!(PotentialSpec::parse("quadratic r").is_err());
        assert_eq!(PotentialSpec::parse("expr 1 + r").unwrap().to_string(), "expr 1 + r");
        assert_eq!(PotentialSpec::parse("const 1").unwrap().to_string(), "const 1.0");
    }

    #[test]
    fn sampled_drift_of_linear_potential() {
        let nodes: Vec<f64> = (0..=10).map(|i| 1.0 + 0.1 * i as f64).collect();
        let vals: Vec<f64> = nodes.iter().map(|r| 2.0 * r).collect();
        let d = sampled_drift(&nodes, &vals);
        for (r, v) in nodes.iter().zip(d) {
            assert!((v - 2.0 * r).abs() < 1e-12);
        }
    }
}
