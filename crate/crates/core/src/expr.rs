//! Scalar expression trees over named variables.
//!
//! Reaction terms, noise coefficients and initial data are all written as
//! small arithmetic expressions. The tree is kept explicit (rather than
//! compiled to closures) so that the assumption checks can expand it
//! symbolically.

use std::fmt;

use thiserror::Error;

/// Elementary functions accepted by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
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
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("domain error in `{0}`")]
    Domain(String),
    #[error("expected {expected} variables, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn var(index: usize) -> Self {
        Expr::Var(index)
    }

    /// Evaluate with a checked traversal. The left operand is always
    /// evaluated before the right one, so results are reproducible bit for bit.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => vars[*i],
            Expr::Neg(e) => -e.eval(vars)?,
            Expr::Add(a, b) => a.eval(vars)? + b.eval(vars)?,
            Expr::Sub(a, b) => a.eval(vars)? - b.eval(vars)?,
            Expr::Mul(a, b) => a.eval(vars)? * b.eval(vars)?,
            Expr::Div(a, b) => {
                let num = a.eval(vars)?;
                let den = b.eval(vars)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero(self.to_string()));
                }
                num / den
            }
            Expr::Pow(base, exponent) => {
                let b = base.eval(vars)?;
                match exponent.as_small_integer() {
                    Some(k) => {
                        if k < 0 && b == 0.0 {
                            return Err(EvalError::DivisionByZero(self.to_string()));
                        }
                        b.powi(k)
                    }
                    None => {
                        let e = exponent.eval(vars)?;
                        if b < 0.0 && e.fract() != 0.0 {
                            return Err(EvalError::Domain(self.to_string()));
                        }
                        b.powf(e)
                    }
                }
            }
            Expr::Call(f, arg) => {
                let x = arg.eval(vars)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Ln => {
                        if x <= 0.0 {
                            return Err(EvalError::Domain(self.to_string()));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(EvalError::Domain(self.to_string()));
                        }
                        x.sqrt()
                    }
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Abs => x.abs(),
                }
            }
        };
        Ok(value)
    }

    /// Exponent written as an integer literal (`u^3`, `u^-1`).
    pub fn as_small_integer(&self) -> Option<i32> {
        match self {
            Expr::Const(c) if c.fract() == 0.0 && c.abs() <= 64.0 => Some(*c as i32),
            Expr::Neg(e) => e.as_small_integer().map(|k| -k),
            _ => None,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn mentions(&self, var: usize) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(i) => *i == var,
            Expr::Neg(e) | Expr::Call(_, e) => e.mentions(var),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.mentions(var) || b.mentions(var),
        }
    }

    /// Only `+ - *` and nonnegative integer powers.
    pub fn is_polynomial(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => true,
            Expr::Neg(e) => e.is_polynomial(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.is_polynomial() && b.is_polynomial()
            }
            Expr::Div(a, b) => {
                a.is_polynomial() && matches!(**b, Expr::Const(c) if c != 0.0)
            }
            Expr::Pow(a, b) => a.is_polynomial() && matches!(b.as_small_integer(), Some(k) if k >= 0),
            Expr::Call(..) => false,
        }
    }

    /// Render with caller-supplied variable names.
    pub fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.write_with(&mut out, &|i| {
            names.get(i).cloned().unwrap_or_else(|| format!("a{}", i + 1))
        }, 0)
        .expect("writing to a String cannot fail");
        out
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }

    fn write_with(
        &self,
        out: &mut impl fmt::Write,
        name: &dyn Fn(usize) -> String,
        parent: u8,
    ) -> fmt::Result {
        let prec = self.precedence();
        let paren = prec < parent;
        if paren {
            out.write_char('(')?;
        }
        match self {
            Expr::Const(c) => write!(out, "{c}")?,
            Expr::Var(i) => out.write_str(&name(*i))?,
            Expr::Neg(e) => {
                out.write_char('-')?;
                e.write_with(out, name, 4)?;
            }
            Expr::Add(a, b) => {
                a.write_with(out, name, 1)?;
                out.write_str(" + ")?;
                b.write_with(out, name, 2)?;
            }
            Expr::Sub(a, b) => {
                a.write_with(out, name, 1)?;
                out.write_str(" - ")?;
                b.write_with(out, name, 2)?;
            }
            Expr::Mul(a, b) => {
                a.write_with(out, name, 2)?;
                out.write_char('*')?;
                b.write_with(out, name, 3)?;
            }
            Expr::Div(a, b) => {
                a.write_with(out, name, 2)?;
                out.write_char('/')?;
                b.write_with(out, name, 3)?;
            }
            Expr::Pow(a, b) => {
                a.write_with(out, name, 5)?;
                out.write_char('^')?;
                b.write_with(out, name, 4)?;
            }
            Expr::Call(f, arg) => {
                write!(out, "{}(", f.name())?;
                arg.write_with(out, name, 0)?;
                out.write_char(')')?;
            }
        }
        if paren {
            out.write_char(')')?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_with(f, &|i| format!("a{}", i + 1), 0)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl Expr {
    pub fn pow(self, k: i32) -> Expr {
        Expr::Pow(Box::new(self), Box::new(Expr::Const(f64::from(k))))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut tokens = Vec::new();
    let (mut line, mut column) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, column);
        if c == '\n' {
            line += 1;
            column = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
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
            let value = text.parse::<f64>().map_err(|_| ParseError {
                line: l0,
                column: c0,
                message: format!("malformed number `{text}`"),
            })?;
            column += i - start;
            tokens.push(Token { tok: Tok::Num(value), line: l0, column: c0 });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            column += i - start;
            let text: String = chars[start..i].iter().collect();
            tokens.push(Token { tok: Tok::Ident(text), line: l0, column: c0 });
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '*' if chars.get(i + 1) == Some(&'*') => {
                i += 1;
                column += 1;
                Tok::Op('^')
            }
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            _ => {
                return Err(ParseError {
                    line: l0,
                    column: c0,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        tokens.push(Token { tok, line: l0, column: c0 });
        i += 1;
        column += 1;
    }
    tokens.push(Token { tok: Tok::End, line, column });
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    names: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, token: &Token, message: impl Into<String>) -> ParseError {
        ParseError { line: token.line, column: token.column, message: message.into() }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Op('+') => {
                    self.next();
                    lhs = lhs + self.term()?;
                }
                Tok::Op('-') => {
                    self.next();
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Op('*') => {
                    self.next();
                    lhs = lhs * self.unary()?;
                }
                Tok::Op('/') => {
                    self.next();
                    lhs = lhs / self.unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().tok {
            Tok::Op('-') => {
                self.next();
                Ok(-self.unary()?)
            }
            Tok::Op('+') => {
                self.next();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Op('^') {
            self.next();
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let token = self.next();
        match &token.tok {
            Tok::Num(v) => Ok(Expr::Const(*v)),
            Tok::LParen => {
                let inner = self.expr()?;
                let close = self.next();
                if close.tok != Tok::RParen {
                    return Err(self.error(&close, "expected `)`"));
                }
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    let func = Func::from_name(name)
                        .ok_or_else(|| self.error(&token, format!("unknown function `{name}`")))?;
                    self.next();
                    let arg = self.expr()?;
                    let close = self.next();
                    if close.tok != Tok::RParen {
                        return Err(self.error(&close, "expected `)`"));
                    }
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if let Some(i) = self.names.iter().position(|n| n == name) {
                    return Ok(Expr::Var(i));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                Err(self.error(&token, format!("unknown variable `{name}`")))
            }
            Tok::End => Err(self.error(&token, "unexpected end of expression")),
            other => Err(self.error(&token, format!("unexpected token {other:?}"))),
        }
    }
}

/// Parse `src` with variables resolved against `names` (index = position).
pub fn parse(src: &str, names: &[String]) -> Result<Expr, ParseError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens, pos: 0, names };
    let expr = parser.expr()?;
    let rest = parser.peek().clone();
    if rest.tok != Tok::End {
        return Err(parser.error(&rest, "trailing input"));
    }
    Ok(expr)
}
