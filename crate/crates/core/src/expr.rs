//! A small arithmetic grammar over ambient coordinates with symbolic
//! differentiation.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?          exponent must be constant
//! atom  := number | pi | x1..xN | x | y | z | func '(' expr ')' | '(' expr ')'
//! func  := abs | exp | sin | cos | sqrt
//! ```

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sign,
    Exp,
    Sin,
    Cos,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!(
                "unexpected trailing input in `{src}` at token {}",
                p.pos
            )));
        }
        Ok(e.fold())
    }

    /// Parses a constant expression such as `pi/4` or `0.5`.
    pub fn parse_constant(src: &str) -> Result<f64> {
        let e = Expr::parse(src)?;
        if e.max_var().is_some() {
            return Err(Error::Parse(format!("`{src}` is not a constant")));
        }
        Ok(e.eval(&[]))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x.get(*i).copied().unwrap_or(0.0),
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, k) => {
                let v = a.eval(x);
                if k.fract() == 0.0 && k.abs() < 64.0 {
                    v.powi(*k as i32)
                } else {
                    v.powf(*k)
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(x);
                match f {
                    Func::Abs => v.abs(),
                    Func::Sign => {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Exp => v.exp(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    /// Highest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    /// Symbolic partial derivative with respect to coordinate `i`.
    pub fn derivative(&self, i: usize) -> Expr {
        use Expr::*;
        let d = match self {
            Const(_) => Const(0.0),
            Var(j) => Const(if *j == i { 1.0 } else { 0.0 }),
            Neg(a) => Neg(Box::new(a.derivative(i))),
            Add(a, b) => Add(Box::new(a.derivative(i)), Box::new(b.derivative(i))),
            Sub(a, b) => Sub(Box::new(a.derivative(i)), Box::new(b.derivative(i))),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.derivative(i)), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.derivative(i)))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.derivative(i)), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.derivative(i)))),
                )),
                Box::new(Pow(b.clone(), 2.0)),
            ),
            Pow(a, k) => Mul(
                Box::new(Mul(Box::new(Const(*k)), Box::new(Pow(a.clone(), k - 1.0)))),
                Box::new(a.derivative(i)),
            ),
            Call(f, a) => {
                let inner = a.derivative(i);
                let outer = match f {
                    Func::Abs => Call(Func::Sign, a.clone()),
                    Func::Sign => Const(0.0),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(Box::new(Call(Func::Sin, a.clone()))),
                    Func::Sqrt => Div(
                        Box::new(Const(0.5)),
                        Box::new(Call(Func::Sqrt, a.clone())),
                    ),
                };
                Mul(Box::new(outer), Box::new(inner))
            }
        };
        d.fold()
    }

    /// Constant folding and removal of additive/multiplicative identities.
    pub fn fold(self) -> Expr {
        use Expr::*;
        match self {
            Neg(a) => match a.fold() {
                Const(c) => Const(-c),
                Neg(inner) => *inner,
                e => Neg(Box::new(e)),
            },
            Add(a, b) => match (a.fold(), b.fold()) {
                (Const(x), Const(y)) => Const(x + y),
                (Const(0.0), e) | (e, Const(0.0)) => e,
                (x, y) => Add(Box::new(x), Box::new(y)),
            },
            Sub(a, b) => match (a.fold(), b.fold()) {
                (Const(x), Const(y)) => Const(x - y),
                (e, Const(0.0)) => e,
                (Const(0.0), e) => Neg(Box::new(e)).fold(),
                (x, y) => Sub(Box::new(x), Box::new(y)),
            },
            Mul(a, b) => match (a.fold(), b.fold()) {
                (Const(x), Const(y)) => Const(x * y),
                (Const(z), _) | (_, Const(z)) if z == 0.0 => Const(0.0),
                (Const(o), e) | (e, Const(o)) if o == 1.0 => e,
                (x, y) => Mul(Box::new(x), Box::new(y)),
            },
            Div(a, b) => match (a.fold(), b.fold()) {
                (Const(x), Const(y)) => Const(x / y),
                (Const(0.0), _) => Const(0.0),
                (e, Const(1.0)) => e,
                (x, y) => Div(Box::new(x), Box::new(y)),
            },
            Pow(a, k) => match a.fold() {
                _ if k == 0.0 => Const(1.0),
                e if k == 1.0 => e,
                Const(c) => Const(c.powf(k)),
                e => Pow(Box::new(e), k),
            },
            Call(f, a) => match a.fold() {
                Const(c) => Const(Call(f, Box::new(Const(c))).eval(&[])),
                e => Call(f, Box::new(e)),
            },
            e => e,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Abs => "abs",
                    Func::Sign => "sign",
                    Func::Exp => "exp",
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
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
            // scientific notation
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{text}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Token::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Token::RParen);
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character `{c}` in `{src}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if let Some(Token::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?.fold();
            let k = match exp {
                Expr::Const(k) => k,
                other => {
                    return Err(Error::Parse(format!(
                        "exponent must be constant, found `{other}`"
                    )))
                }
            };
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(Error::Parse("missing `)`".into())),
                }
            }
            Some(Token::Ident(name)) => {
                let func = match name.as_str() {
                    "abs" => Some(Func::Abs),
                    "exp" => Some(Func::Exp),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    match self.next() {
                        Some(Token::LParen) => {}
                        _ => return Err(Error::Parse(format!("`{name}` needs `(`"))),
                    }
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Token::RParen) => {}
                        _ => return Err(Error::Parse("missing `)`".into())),
                    }
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "x" => Ok(Expr::Var(0)),
                    "y" => Ok(Expr::Var(1)),
                    "z" => Ok(Expr::Var(2)),
                    _ => {
                        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                            if idx == 0 {
                                return Err(Error::Parse("coordinates are numbered from x1".into()));
                            }
                            Ok(Expr::Var(idx - 1))
                        } else {
                            Err(Error::Parse(format!("unknown identifier `{name}`")))
                        }
                    }
                }
            }
            other => Err(Error::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("(x1+0.2)^2 + x2^2").unwrap();
        assert!((e.eval(&[0.3, 2.0]) - 4.25).abs() < 1e-15);
        assert!((Expr::parse_constant("pi/4").unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-16);
        assert_eq!(Expr::parse("-2^2").unwrap().eval(&[]), -4.0);
        assert_eq!(Expr::parse("1e-3*x").unwrap().eval(&[2.0]), 2e-3);
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("x^y").is_err());
        assert!(Expr::parse("2 +").is_err());
        assert!(Expr::parse_constant("x+1").is_err());
    }

    #[test]
    fn symbolic_derivatives_match_finite_differences() {
        let e = Expr::parse("x1^3*x2 - exp(x2)*sin(x1) + abs(x1 - 0.1) + sqrt(x2+2)/x1").unwrap();
        let p = [0.7, -0.3];
        for i in 0..2 {
            let d = e.derivative(i).eval(&p);
            let h = 1e-6;
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let fd = (e.eval(&a) - e.eval(&b)) / (2.0 * h);
            assert!((d - fd).abs() < 1e-7, "i={i} d={d} fd={fd}");
        }
    }

    #[test]
    fn folding_removes_identities() {
        let e = Expr::parse("x*1 + 0*y").unwrap();
        assert_eq!(e, Expr::Var(0));
        assert_eq!(Expr::parse("x^2").unwrap().derivative(1), Expr::Const(0.0));
    }
}
