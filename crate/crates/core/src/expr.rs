//! A small arithmetic language for model coefficients.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := NUMBER | VARIABLE | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus (`-x^2` is `-(x^2)`) and associates to
//! the right. Variables are `t`, `x`, `m1`, `m2` and `a`; each coefficient
//! slot restricts which of them may appear. Functions: `sin`, `cos`, `exp`,
//! `sqrt`, `abs`, `tanh` (one argument) and `min`, `max` (two arguments).

use crate::error::{Error, Result};
use std::fmt;

/// Maximum depth of a parsed expression tree.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    X,
    M1,
    M2,
    A,
}

impl Var {
    pub const ALL: [Var; 5] = [Var::T, Var::X, Var::M1, Var::M2, Var::A];

    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::M1 => "m1",
            Var::M2 => "m2",
            Var::A => "a",
        }
    }

    fn from_name(s: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == s)
    }
}

/// Variables allowed in each coefficient slot.
pub mod signature {
    use super::Var;

    pub const DRIFT: &[Var] = &[Var::T, Var::X, Var::M1, Var::M2, Var::A];
    pub const DIFFUSION: &[Var] = &[Var::T, Var::X, Var::M1, Var::M2];
    pub const RUNNING: &[Var] = &[Var::T, Var::X, Var::M1, Var::M2, Var::A];
    pub const REFLECTION: &[Var] = &[Var::T, Var::X, Var::M1, Var::M2];
    pub const TERMINAL: &[Var] = &[Var::X, Var::M1, Var::M2];
    /// State-feedback strict controls.
    pub const FEEDBACK: &[Var] = &[Var::T, Var::X, Var::M1, Var::M2];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Tanh,
    Min,
    Max,
}

impl Func {
    const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Sqrt,
        Func::Abs,
        Func::Tanh,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Values for every variable of the language.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub t: f64,
    pub x: f64,
    pub m1: f64,
    pub m2: f64,
    pub a: f64,
}

impl Bindings {
    fn get(&self, v: Var) -> f64 {
        match v {
            Var::T => self.t,
            Var::X => self.x,
            Var::M1 => self.m1,
            Var::M2 => self.m2,
            Var::A => self.a,
        }
    }
}

impl Expr {
    pub fn parse(source: &str, allowed: &[Var]) -> Result<Expr> {
        let tokens = lex(source)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            allowed,
            depth: 0,
        };
        let e = p.expr()?;
        let tok = p.peek();
        if tok.kind != Tok::End {
            return Err(p.unexpected(tok, &["operator", "end of input"]));
        }
        if e.depth() > MAX_DEPTH {
            return Err(Error::SyntaxError {
                line: 1,
                column: 1,
                expected: vec![format!("expression tree of depth <= {MAX_DEPTH}")],
                found: format!("depth {}", e.depth()),
            });
        }
        Ok(e)
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(e) => 1 + e.depth(),
            Expr::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
            Expr::Call(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    pub fn uses(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(e) => e.uses(v),
            Expr::Binary(_, l, r) => l.uses(v) || r.uses(v),
            Expr::Call(_, args) => args.iter().any(|e| e.uses(v)),
        }
    }

    /// Evaluate under `b`. Division by zero, domain errors and non-finite
    /// intermediate values are reported instead of propagating NaN.
    pub fn eval(&self, b: &Bindings) -> Result<f64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => b.get(*v),
            Expr::Neg(e) => -e.eval(b)?,
            Expr::Binary(op, l, r) => {
                let (l, r) = (l.eval(b)?, r.eval(b)?);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(self.blowup("division by zero"));
                        }
                        l / r
                    }
                    BinOp::Pow => l.powf(r),
                }
            }
            Expr::Call(f, args) => {
                let x = args[0].eval(b)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(self.blowup("square root of a negative value"));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                    Func::Tanh => x.tanh(),
                    Func::Min => x.min(args[1].eval(b)?),
                    Func::Max => x.max(args[1].eval(b)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.blowup(&format!("value {v}")))
        }
    }

    fn blowup(&self, what: &str) -> Error {
        Error::NumericalBlowup {
            step: 0,
            detail: format!("{what} in `{self}`"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    text: String,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_digit() || c == '.' {
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
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Tok::Num(v),
                _ => {
                    return Err(Error::SyntaxError {
                        line,
                        column: col,
                        expected: vec!["number".into()],
                        found: format!("`{text}`"),
                    })
                }
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    return Err(Error::SyntaxError {
                        line,
                        column: col,
                        expected: vec!["expression".into()],
                        found: format!("`{c}`"),
                    })
                }
            }
        };
        out.push(Token {
            kind,
            text: chars[start..i].iter().collect(),
            line,
            column: col,
        });
        col += i - start;
    }
    out.push(Token {
        kind: Tok::End,
        text: String::new(),
        line,
        column: col,
    });
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    allowed: &'a [Var],
    depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Token {
        self.tokens[self.pos].clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, tok: Token, expected: &[&str]) -> Error {
        Error::SyntaxError {
            line: tok.line,
            column: tok.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: if tok.kind == Tok::End {
                "end of input".into()
            } else {
                format!("`{}`", tok.text)
            },
        }
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let tok = self.peek();
            return Err(Error::SyntaxError {
                line: tok.line,
                column: tok.column,
                expected: vec![format!("nesting depth <= {MAX_DEPTH}")],
                found: "deeper nesting".into(),
            });
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = self.peek().kind {
            self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = self.peek().kind {
            self.bump();
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek().kind == Tok::Op('-') {
            self.bump();
            self.enter()?;
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek().kind == Tok::Op('^') {
            self.bump();
            self.enter()?;
            let exp = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let tok = self.bump();
        match &tok.kind {
            Tok::Num(v) => Ok(Expr::Num(*v)),
            Tok::LParen => {
                let e = self.expr()?;
                let close = self.bump();
                if close.kind != Tok::RParen {
                    return Err(self.unexpected(close, &["`)`", "operator"]));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().kind == Tok::LParen {
                    let func = Func::from_name(name).ok_or_else(|| Error::UnknownFunction {
                        name: name.clone(),
                        line: tok.line,
                        column: tok.column,
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    loop {
                        let next = self.bump();
                        match next.kind {
                            Tok::Comma => args.push(self.expr()?),
                            Tok::RParen => break,
                            _ => return Err(self.unexpected(next, &["`,`", "`)`"])),
                        }
                    }
                    if args.len() != func.arity() {
                        return Err(Error::SyntaxError {
                            line: tok.line,
                            column: tok.column,
                            expected: vec![format!("{} argument(s) to {}", func.arity(), func.name())],
                            found: format!("{} argument(s)", args.len()),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                match Var::from_name(name) {
                    Some(v) if self.allowed.contains(&v) => Ok(Expr::Var(v)),
                    _ => Err(Error::UnknownVariable {
                        name: name.clone(),
                        line: tok.line,
                        column: tok.column,
                    }),
                }
            }
            _ => Err(self.unexpected(tok, &["number", "variable", "function", "`(`"])),
        }
    }
}
