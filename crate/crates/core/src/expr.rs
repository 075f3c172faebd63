//! Deterministic one-variable expression language for time-dependent sources
//! and nonlinear constitutive laws, with symbolic differentiation.
//!
//! Grammar (| is alternation, suffix * repetition, ? optional):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | power            -- unary minus binds looser than ^
//! power  := atom ('^' factor)?            -- right associative
//! atom   := number | var | 'pi' | fn '(' expr ')' | '(' expr ')'
//! fn     := sin | cos | exp | ln | sqrt | tanh
//! ```
//!
//! Exactly one variable is permitted per expression; its name is fixed by the
//! context (`t` for sources, `q` for capacitors, `phi` for inductors, `i` for
//! resistors, `v` for conductors).

use crate::error::{Error, Result};

pub const VAR_NAMES: [&str; 5] = ["t", "q", "phi", "i", "v"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Tanh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

/// Expression tree over a single unnamed free variable.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Num(f64),
    Var,
    Pi,
    Neg(Box<ExprAst>),
    Bin(BinOp, Box<ExprAst>, Box<ExprAst>),
    Call(Func, Box<ExprAst>),
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
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
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, line: usize, col0: usize) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line, col: col0 }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Syntax { line: self.line, col: self.col, msg: msg.into() }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        self.col += 1;
        c
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let col = self.col;
            let c = self.src[self.pos];
            match c {
                b' ' | b'\t' => {
                    self.bump();
                }
                b'+' => {
                    self.bump();
                    out.push((Tok::Plus, col));
                }
                b'-' => {
                    self.bump();
                    out.push((Tok::Minus, col));
                }
                b'*' => {
                    self.bump();
                    out.push((Tok::Star, col));
                }
                b'/' => {
                    self.bump();
                    out.push((Tok::Slash, col));
                }
                b'^' => {
                    self.bump();
                    out.push((Tok::Caret, col));
                }
                b'(' => {
                    self.bump();
                    out.push((Tok::LParen, col));
                }
                b')' => {
                    self.bump();
                    out.push((Tok::RParen, col));
                }
                b'0'..=b'9' | b'.' => {
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && matches!(self.src[self.pos], b'0'..=b'9' | b'.')
                    {
                        self.bump();
                    }
                    // exponent part
                    if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
                        let mut k = self.pos + 1;
                        if k < self.src.len() && matches!(self.src[k], b'+' | b'-') {
                            k += 1;
                        }
                        if k < self.src.len() && self.src[k].is_ascii_digit() {
                            self.bump(); // e
                            if matches!(self.src[self.pos], b'+' | b'-') {
                                self.bump();
                            }
                            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit()
                            {
                                self.bump();
                            }
                        }
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    let v: f64 =
                        text.parse().map_err(|_| self.err(format!("bad number `{text}`")))?;
                    out.push((Tok::Num(v), col));
                }
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && matches!(self.src[self.pos], b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_')
                    {
                        self.bump();
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    out.push((Tok::Ident(text.to_string()), col));
                }
                other => return Err(self.err(format!("unexpected character `{}`", other as char))),
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    allowed_var: String,
}

impl Parser {
    fn err_at(&self, col: usize, msg: impl Into<String>) -> Error {
        Error::Syntax { line: self.line, col, msg: msg.into() }
    }

    fn err_here(&self, msg: impl Into<String>) -> Error {
        let col = self.toks.get(self.pos).map(|t| t.1).unwrap_or_else(|| {
            self.toks.last().map(|t| t.1 + 1).unwrap_or(1)
        });
        self.err_at(col, msg)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t.map(|t| t.0)
    }

    fn expr(&mut self) -> Result<ExprAst> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.next();
                    let rhs = self.term()?;
                    lhs = ExprAst::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.next();
                    let rhs = self.term()?;
                    lhs = ExprAst::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ExprAst> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.next();
                    let rhs = self.factor()?;
                    lhs = ExprAst::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.next();
                    let rhs = self.factor()?;
                    lhs = ExprAst::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<ExprAst> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.next();
            let inner = self.factor()?;
            return Ok(ExprAst::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprAst> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.next();
            let exp = self.factor()?;
            return Ok(ExprAst::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ExprAst> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(ExprAst::Num(v)),
            Some(Tok::Ident(name)) => {
                if name == "pi" {
                    return Ok(ExprAst::Pi);
                }
                if let Some(f) = Func::from_name(&name) {
                    if !matches!(self.peek(), Some(Tok::LParen)) {
                        return Err(self.err_here(format!("`{name}` must be called as `{name}(...)`")));
                    }
                    self.next();
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Tok::RParen) => {}
                        _ => return Err(self.err_here("expected `)`")),
                    }
                    return Ok(ExprAst::Call(f, Box::new(arg)));
                }
                if name == self.allowed_var {
                    return Ok(ExprAst::Var);
                }
                if VAR_NAMES.contains(&name.as_str()) {
                    return Err(Error::ForbiddenVariable {
                        allowed: self.allowed_var.clone(),
                        found: name,
                    });
                }
                Err(self.err_here(format!("unknown identifier `{name}`")))
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(self.err_here("expected `)`")),
                }
            }
            Some(other) => Err(self.err_here(format!("unexpected token {other:?}"))),
            None => Err(self.err_here("unexpected end of expression")),
        }
    }
}

/// Parse an expression whose single free variable is `allowed_var`
/// (one of `t`, `q`, `phi`, `i`, `v`).
pub fn parse_expr(text: &str, allowed_var: &str) -> Result<ExprAst> {
    parse_expr_at(text, allowed_var, 1, 1)
}

/// Same as [`parse_expr`] but with the position of the expression inside a
/// larger file, so syntax errors report file coordinates.
pub fn parse_expr_at(text: &str, allowed_var: &str, line: usize, col0: usize) -> Result<ExprAst> {
    assert!(VAR_NAMES.contains(&allowed_var), "allowed_var must be one of {VAR_NAMES:?}");
    let toks = Lexer::new(text, line, col0).tokens()?;
    let mut p = Parser { toks, pos: 0, line, allowed_var: allowed_var.to_string() };
    let ast = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err_here("trailing input after expression"));
    }
    Ok(ast)
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluate at a value of the free variable. Non-finite results (log of a
/// negative number, division by zero, overflow) are reported as `Domain`.
pub fn eval_expr(ast: &ExprAst, value: f64) -> Result<f64> {
    let v = eval_raw(ast, value);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("expression evaluated to {v} at {value}")))
    }
}

fn eval_raw(ast: &ExprAst, x: f64) -> f64 {
    match ast {
        ExprAst::Num(v) => *v,
        ExprAst::Var => x,
        ExprAst::Pi => std::f64::consts::PI,
        ExprAst::Neg(a) => -eval_raw(a, x),
        ExprAst::Bin(op, a, b) => {
            let (a, b) = (eval_raw(a, x), eval_raw(b, x));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            }
        }
        ExprAst::Call(f, a) => {
            let a = eval_raw(a, x);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Ln => a.ln(),
                Func::Sqrt => a.sqrt(),
                Func::Tanh => a.tanh(),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Symbolic differentiation
// ---------------------------------------------------------------------------

fn num(v: f64) -> ExprAst {
    ExprAst::Num(v)
}

fn is_zero(e: &ExprAst) -> bool {
    matches!(e, ExprAst::Num(v) if *v == 0.0)
}

fn is_one(e: &ExprAst) -> bool {
    matches!(e, ExprAst::Num(v) if *v == 1.0)
}

/// Build a binary node with literal constant folding and the obvious
/// 0/1 identities, so derivatives stay readable.
fn bin(op: BinOp, a: ExprAst, b: ExprAst) -> ExprAst {
    if let (ExprAst::Num(x), ExprAst::Num(y)) = (&a, &b) {
        let v = match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
            BinOp::Pow => x.powf(*y),
        };
        if v.is_finite() {
            return num(v);
        }
    }
    match op {
        BinOp::Add if is_zero(&a) => return b,
        BinOp::Add if is_zero(&b) => return a,
        BinOp::Sub if is_zero(&b) => return a,
        BinOp::Mul if is_zero(&a) || is_zero(&b) => return num(0.0),
        BinOp::Mul if is_one(&a) => return b,
        BinOp::Mul if is_one(&b) => return a,
        BinOp::Div if is_zero(&a) => return num(0.0),
        BinOp::Div if is_one(&b) => return a,
        BinOp::Pow if is_one(&b) => return a,
        _ => {}
    }
    ExprAst::Bin(op, Box::new(a), Box::new(b))
}

fn neg(a: ExprAst) -> ExprAst {
    match a {
        ExprAst::Num(v) => num(-v),
        other => ExprAst::Neg(Box::new(other)),
    }
}

/// Symbolic derivative with respect to the free variable.
pub fn diff_expr(ast: &ExprAst) -> ExprAst {
    match ast {
        ExprAst::Num(_) | ExprAst::Pi => num(0.0),
        ExprAst::Var => num(1.0),
        ExprAst::Neg(a) => neg(diff_expr(a)),
        ExprAst::Bin(op, a, b) => {
            let (da, db) = (diff_expr(a), diff_expr(b));
            match op {
                BinOp::Add => bin(BinOp::Add, da, db),
                BinOp::Sub => bin(BinOp::Sub, da, db),
                BinOp::Mul => bin(
                    BinOp::Add,
                    bin(BinOp::Mul, da, (**b).clone()),
                    bin(BinOp::Mul, (**a).clone(), db),
                ),
                BinOp::Div => bin(
                    BinOp::Div,
                    bin(
                        BinOp::Sub,
                        bin(BinOp::Mul, da, (**b).clone()),
                        bin(BinOp::Mul, (**a).clone(), db),
                    ),
                    bin(BinOp::Pow, (**b).clone(), num(2.0)),
                ),
                BinOp::Pow => {
                    // general rule: (a^b)' = a^b * (b' ln a + b a'/a);
                    // constant exponent keeps the familiar power-rule shape
                    if let ExprAst::Num(p) = **b {
                        bin(
                            BinOp::Mul,
                            bin(
                                BinOp::Mul,
                                num(p),
                                bin(BinOp::Pow, (**a).clone(), num(p - 1.0)),
                            ),
                            da,
                        )
                    } else {
                        let a2 = (**a).clone();
                        let b2 = (**b).clone();
                        bin(
                            BinOp::Mul,
                            ast.clone(),
                            bin(
                                BinOp::Add,
                                bin(BinOp::Mul, db, ExprAst::Call(Func::Ln, Box::new(a2.clone()))),
                                bin(BinOp::Div, bin(BinOp::Mul, b2, da), a2),
                            ),
                        )
                    }
                }
            }
        }
        ExprAst::Call(f, a) => {
            let da = diff_expr(a);
            let a2 = (**a).clone();
            let outer = match f {
                Func::Sin => ExprAst::Call(Func::Cos, Box::new(a2)),
                Func::Cos => neg(ExprAst::Call(Func::Sin, Box::new(a2))),
                Func::Exp => ExprAst::Call(Func::Exp, Box::new(a2)),
                Func::Ln => bin(BinOp::Div, num(1.0), a2),
                Func::Sqrt => bin(
                    BinOp::Div,
                    num(0.5),
                    ExprAst::Call(Func::Sqrt, Box::new(a2)),
                ),
                Func::Tanh => {
                    // 1 - tanh(a)^2
                    bin(
                        BinOp::Sub,
                        num(1.0),
                        bin(
                            BinOp::Pow,
                            ExprAst::Call(Func::Tanh, Box::new(a2)),
                            num(2.0),
                        ),
                    )
                }
            };
            bin(BinOp::Mul, outer, da)
        }
    }
}

// ---------------------------------------------------------------------------
// Pretty-printing
// ---------------------------------------------------------------------------

fn prec(ast: &ExprAst) -> u8 {
    match ast {
        ExprAst::Num(v) if *v < 0.0 => 1, // prints with leading '-'
        ExprAst::Num(_) | ExprAst::Var | ExprAst::Pi | ExprAst::Call(..) => 4,
        ExprAst::Bin(BinOp::Pow, ..) => 3,
        ExprAst::Neg(_) => 1,
        ExprAst::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        ExprAst::Bin(BinOp::Add | BinOp::Sub, ..) => 0,
    }
}

/// Render with the given variable name, inserting only the parentheses the
/// grammar needs (parse of the output reproduces the tree).
pub fn print_expr(ast: &ExprAst, var: &str) -> String {
    fn wrap(s: String, need: bool) -> String {
        if need {
            format!("({s})")
        } else {
            s
        }
    }
    // a `factor` in the grammar is a unary chain or a power: additive and
    // multiplicative nodes must be parenthesized in factor position
    fn paren_as_factor(p: u8) -> bool {
        !(p == 1 || p >= 3)
    }
    fn go(ast: &ExprAst, var: &str) -> String {
        match ast {
            ExprAst::Num(v) => format_number(*v),
            ExprAst::Var => var.to_string(),
            ExprAst::Pi => "pi".to_string(),
            ExprAst::Neg(a) => {
                let inner = wrap(go(a, var), paren_as_factor(prec(a)));
                format!("-{inner}")
            }
            ExprAst::Bin(op, a, b) => {
                let (ls, rs) = match op {
                    // left side of +/- may be a whole expression
                    BinOp::Add | BinOp::Sub => (false, prec(b) < 1),
                    // operands are factors; right side also wraps same-level
                    // nodes to keep left associativity
                    BinOp::Mul | BinOp::Div => {
                        (paren_as_factor(prec(a)) && prec(a) != 2, paren_as_factor(prec(b)) || prec(b) == 2)
                    }
                    // base of ^ must be an atom; exponent is a factor
                    BinOp::Pow => (prec(a) < 4, paren_as_factor(prec(b))),
                };
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                let l = wrap(go(a, var), ls);
                let r = wrap(go(b, var), rs);
                format!("{l}{sym}{r}")
            }
            ExprAst::Call(f, a) => format!("{}({})", f.name(), go(a, var)),
        }
    }
    go(ast, var)
}

fn format_number(v: f64) -> String {
    if v < 0.0 {
        // negative literals re-parse as unary minus; print them that way
        return format!("-{}", format_number(-v));
    }
    format!("{v}")
}
