//! Tiny expression language for forcing terms and scalar knobs:
//! `+ - * /`, `sin`, `cos`, `exp`, the time variable `t`, and the state
//! components `y1..yn`, `z1..zn`. No side effects, no assignment.

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    Time,
    Y(usize),
    Z(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, t: f64, y: &[f64], z: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::Y(i) => y.get(*i).copied().unwrap_or(0.0),
            Expr::Z(i) => z.get(*i).copied().unwrap_or(0.0),
            Expr::Neg(e) => -e.eval(t, y, z),
            Expr::Add(a, b) => a.eval(t, y, z) + b.eval(t, y, z),
            Expr::Sub(a, b) => a.eval(t, y, z) - b.eval(t, y, z),
            Expr::Mul(a, b) => a.eval(t, y, z) * b.eval(t, y, z),
            Expr::Div(a, b) => a.eval(t, y, z) / b.eval(t, y, z),
            Expr::Sin(e) => e.eval(t, y, z).sin(),
            Expr::Cos(e) => e.eval(t, y, z).cos(),
            Expr::Exp(e) => e.eval(t, y, z).exp(),
        }
    }

    /// True when the expression reads a state component (y or z).
    pub fn uses_state(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Time => false,
            Expr::Y(_) | Expr::Z(_) => true,
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Exp(e) => e.uses_state(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.uses_state() || b.uses_state()
            }
        }
    }
}

pub fn parse(src: &str, dim: usize) -> Result<Expr> {
    let tokens = lex(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        dim,
    };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        bail!("unexpected trailing input at token {} in {src:?}", p.pos);
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .with_context(|| format!("bad number {text:?} in {src:?}"))?;
                out.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => bail!("unexpected character {other:?} in {src:?}"),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                Tok::Plus => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(op) = self.peek() {
            match op {
                Tok::Star => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Minus) => Ok(Expr::Neg(Box::new(self.factor()?))),
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => bail!("missing closing parenthesis"),
                }
            }
            Some(Tok::Ident(name)) => self.ident(name),
            other => bail!("unexpected token {other:?}"),
        }
    }

    fn ident(&mut self, name: String) -> Result<Expr> {
        match name.as_str() {
            "t" => Ok(Expr::Time),
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "sin" | "cos" | "exp" => {
                match self.next() {
                    Some(Tok::LParen) => {}
                    _ => bail!("{name} requires parentheses"),
                }
                let arg = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => {}
                    _ => bail!("missing closing parenthesis for {name}"),
                }
                Ok(match name.as_str() {
                    "sin" => Expr::Sin(Box::new(arg)),
                    "cos" => Expr::Cos(Box::new(arg)),
                    _ => Expr::Exp(Box::new(arg)),
                })
            }
            _ => {
                if let Some(rest) = name.strip_prefix('y') {
                    let idx: usize = rest.parse().with_context(|| format!("bad component {name:?}"))?;
                    if idx == 0 || idx > self.dim {
                        bail!("component {name} out of range 1..={}", self.dim);
                    }
                    return Ok(Expr::Y(idx - 1));
                }
                if let Some(rest) = name.strip_prefix('z') {
                    let idx: usize = rest.parse().with_context(|| format!("bad component {name:?}"))?;
                    if idx == 0 || idx > self.dim {
                        bail!("component {name} out of range 1..={}", self.dim);
                    }
                    return Ok(Expr::Z(idx - 1));
                }
                bail!("unknown identifier {name:?}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_functions() {
        let e = parse("1 + 2*t - sin(t)/2", 1).unwrap();
        let t = 0.7;
        assert!((e.eval(t, &[], &[]) - (1.0 + 2.0 * t - t.sin() / 2.0)).abs() < 1e-15);
        let e = parse("exp(-t) * cos(2*pi*t)", 1).unwrap();
        assert!(
            (e.eval(0.3, &[], &[])
                - (-0.3f64).exp() * (2.0 * std::f64::consts::PI * 0.3).cos())
            .abs()
                < 1e-15
        );
    }

    #[test]
    fn state_components() {
        let e = parse("y1 + 0.5*z2", 2).unwrap();
        assert!(e.uses_state());
        assert_eq!(e.eval(0.0, &[3.0, 4.0], &[0.0, 2.0]), 4.0);
        assert!(parse("y3", 2).is_err());
        assert!(!parse("1+t", 2).unwrap().uses_state());
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("1 +", 1).is_err());
        assert!(parse("foo(t)", 1).is_err());
        assert!(parse("sin t", 1).is_err());
        assert!(parse("1 2", 1).is_err());
    }
}
