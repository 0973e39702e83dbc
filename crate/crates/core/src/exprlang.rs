//! Scalar arithmetic expressions over time, state variables and named
//! parameters.
//!
//! Expressions are parsed once with a Pratt parser and evaluated either on
//! plain `f64` values or on [`Dual`] numbers, which carry the derivative with
//! respect to a single seeded state variable. The dual path is what assembles
//! Jacobians for user-declared systems.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! expr    := expr ('+' | '-') expr        left-assoc
//!          | expr ('*' | '/') expr        left-assoc
//!          | '-' expr
//!          | expr '^' expr                right-assoc
//!          | func '(' expr ')' | '(' expr ')' | number | ident
//! func    := sin | cos | tan | tanh | exp | log | sqrt | abs
//! ```
//!
//! so `-x^2` parses as `-(x^2)`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

/// Name of the time variable, always in scope unless shadowed by a state name.
pub const TIME_VAR: &str = "t";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("unexpected character {ch:?} at byte {offset}")]
    BadCharacter { ch: char, offset: usize },
    #[error("malformed number {text:?} at byte {offset}")]
    MalformedNumber { text: String, offset: usize },
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: &'static str,
        found: String,
    },
    #[error("unknown identifier {name:?} at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::BadCharacter { offset, .. }
            | ParseError::MalformedNumber { offset, .. }
            | ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. } => Some(*offset),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainErrorKind {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    ZeroToNegativePower,
    NegativeBaseFractionalPower,
    NonFinite,
}

impl fmt::Display for DomainErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainErrorKind::DivisionByZero => "division by zero",
            DomainErrorKind::LogOfNonPositive => "log of non-positive value",
            DomainErrorKind::SqrtOfNegative => "sqrt of negative value",
            DomainErrorKind::ZeroToNegativePower => "zero raised to a negative power",
            DomainErrorKind::NegativeBaseFractionalPower => {
                "negative base raised to a fractional power"
            }
            DomainErrorKind::NonFinite => "non-finite result",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{kind} in `{node}`")]
    Domain { kind: DomainErrorKind, node: String },
    #[error("state vector has length {got}, expected {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("missing parameter {0:?}")]
    MissingParam(String),
    #[error("seed index {seed} out of range for {dim} state variables")]
    SeedOutOfRange { seed: usize, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

/// A resolved variable reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Time,
    State(usize),
    Param(usize),
}

/// Expression tree node. Variable names are resolved to indices at parse time.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression together with the names it was resolved against.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    vars: Arc<[String]>,
    params: Arc<[String]>,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.vars == other.vars && self.params == other.params
    }
}

/// Parses `source` with state variables `vars` (indexed in order) and
/// parameters `params`.
pub fn parse(source: &str, vars: &[&str], params: &[&str]) -> Result<Expr, ParseError> {
    let tokens = lex(source)?;
    if tokens.len() == 1 {
        return Err(ParseError::Empty);
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        vars,
        params,
    };
    let root = parser.expr_bp(0)?;
    let tok = parser.peek();
    if tok.kind != TokenKind::End {
        return Err(ParseError::Syntax {
            offset: tok.offset,
            expected: "operator or end of input",
            found: tok.kind.describe(),
        });
    }
    Ok(Expr {
        root,
        vars: vars.iter().map(|s| s.to_string()).collect(),
        params: params.iter().map(|s| s.to_string()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier {s:?}"),
            TokenKind::Op(c) => format!("operator '{c}'"),
            TokenKind::LParen => "'('".into(),
            TokenKind::RParen => "')'".into(),
            TokenKind::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                TokenKind::Op(c as char)
            }
            b'(' => {
                i += 1;
                TokenKind::LParen
            }
            b')' => {
                i += 1;
                TokenKind::RParen
            }
            b'0'..=b'9' | b'.' => {
                i = scan_number(bytes, i);
                // a number must not run straight into a letter, digit or dot
                if i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.' || bytes[i] == b'_') {
                    let mut end = i;
                    while end < bytes.len()
                        && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'.' || bytes[end] == b'_')
                    {
                        end += 1;
                    }
                    return Err(ParseError::MalformedNumber {
                        text: source[start..end].to_string(),
                        offset: start,
                    });
                }
                let text = &source[start..i];
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() && text != "." => TokenKind::Number(v),
                    _ => {
                        return Err(ParseError::MalformedNumber {
                            text: text.to_string(),
                            offset: start,
                        })
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                TokenKind::Ident(source[start..i].to_string())
            }
            _ => {
                let ch = source[start..].chars().next().unwrap_or('\0');
                return Err(ParseError::BadCharacter { ch, offset: start });
            }
        };
        tokens.push(Token { kind, offset: start });
    }
    tokens.push(Token {
        kind: TokenKind::End,
        offset: source.len(),
    });
    Ok(tokens)
}

/// Advances over `digits [. digits] [(e|E) [+-] digits]`; returns the end index.
/// An incomplete exponent is left for the caller to reject.
fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let digits_start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > digits_start {
            i = j;
        }
    }
    i
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
    params: &'a [&'a str],
}

const PREFIX_NEG_BP: u8 = 5;

fn infix_bp(op: char) -> Option<(u8, u8, BinaryOp)> {
    Some(match op {
        '+' => (1, 2, BinaryOp::Add),
        '-' => (1, 2, BinaryOp::Sub),
        '*' => (3, 4, BinaryOp::Mul),
        '/' => (3, 4, BinaryOp::Div),
        '^' => (8, 7, BinaryOp::Pow),
        _ => return None,
    })
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn expr_bp(&mut self, min_bp: u8) -> Result<Node, ParseError> {
        let tok = self.next();
        let mut lhs = match tok.kind {
            TokenKind::Number(v) => Node::Const(v),
            TokenKind::Op('-') => Node::Neg(Box::new(self.expr_bp(PREFIX_NEG_BP)?)),
            TokenKind::LParen => {
                let inner = self.expr_bp(0)?;
                self.expect_rparen()?;
                inner
            }
            TokenKind::Ident(name) => self.ident(name, tok.offset)?,
            other => {
                return Err(ParseError::Syntax {
                    offset: tok.offset,
                    expected: "operand",
                    found: other.describe(),
                })
            }
        };

        loop {
            let (op, offset) = match &self.peek().kind {
                TokenKind::Op(c) => (*c, self.peek().offset),
                TokenKind::End | TokenKind::RParen => break,
                other => {
                    return Err(ParseError::Syntax {
                        offset: self.peek().offset,
                        expected: "operator",
                        found: other.describe(),
                    })
                }
            };
            let Some((l_bp, r_bp, bin)) = infix_bp(op) else {
                return Err(ParseError::BadCharacter { ch: op, offset });
            };
            if l_bp < min_bp {
                break;
            }
            self.next();
            let rhs = self.expr_bp(r_bp)?;
            lhs = Node::Binary(bin, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let tok = self.next();
        if tok.kind == TokenKind::RParen {
            Ok(())
        } else {
            Err(ParseError::Syntax {
                offset: tok.offset,
                expected: "')'",
                found: tok.kind.describe(),
            })
        }
    }

    fn ident(&mut self, name: String, offset: usize) -> Result<Node, ParseError> {
        if let Some(func) = Func::from_name(&name) {
            if self.peek().kind == TokenKind::LParen {
                self.next();
                let arg = self.expr_bp(0)?;
                self.expect_rparen()?;
                return Ok(Node::Call(func, Box::new(arg)));
            }
        }
        if let Some(i) = self.vars.iter().position(|v| *v == name) {
            return Ok(Node::Var(Var::State(i)));
        }
        if let Some(i) = self.params.iter().position(|p| *p == name) {
            return Ok(Node::Var(Var::Param(i)));
        }
        if name == TIME_VAR {
            return Ok(Node::Var(Var::Time));
        }
        Err(ParseError::UnknownIdentifier { name, offset })
    }
}

/// Forward-mode dual number: a value and its derivative along one seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub deriv: f64,
}

impl Dual {
    pub const fn constant(value: f64) -> Self {
        Dual { value, deriv: 0.0 }
    }

    pub const fn variable(value: f64) -> Self {
        Dual { value, deriv: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual {
            value: self.value + rhs.value,
            deriv: self.deriv + rhs.deriv,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual {
            value: self.value - rhs.value,
            deriv: self.deriv - rhs.deriv,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual {
            value: self.value * rhs.value,
            deriv: self.value * rhs.deriv + self.deriv * rhs.value,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        Dual {
            value: self.value / rhs.value,
            deriv: (self.deriv * rhs.value - self.value * rhs.deriv) / (rhs.value * rhs.value),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            value: -self.value,
            deriv: -self.deriv,
        }
    }
}

/// Numeric type the evaluator runs over.
trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn lift(v: f64) -> Self;
    fn value(self) -> f64;
    fn is_finite(self) -> bool;
    fn powf(self, exponent: Self) -> Self;
    fn apply(self, func: Func) -> Self;
}

impl Scalar for f64 {
    fn lift(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn powf(self, exponent: Self) -> Self {
        f64::powf(self, exponent)
    }
    fn apply(self, func: Func) -> Self {
        match func {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Tan => self.tan(),
            Func::Tanh => self.tanh(),
            Func::Exp => self.exp(),
            Func::Log => self.ln(),
            Func::Sqrt => self.sqrt(),
            Func::Abs => self.abs(),
        }
    }
}

impl Scalar for Dual {
    fn lift(v: f64) -> Self {
        Dual::constant(v)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn is_finite(self) -> bool {
        self.value.is_finite() && self.deriv.is_finite()
    }
    fn powf(self, exponent: Self) -> Self {
        let value = self.value.powf(exponent.value);
        let mut deriv = 0.0;
        if self.deriv != 0.0 {
            deriv += exponent.value * self.value.powf(exponent.value - 1.0) * self.deriv;
        }
        if exponent.deriv != 0.0 {
            deriv += value * self.value.ln() * exponent.deriv;
        }
        Dual { value, deriv }
    }
    fn apply(self, func: Func) -> Self {
        let v = self.value;
        let (value, slope) = match func {
            Func::Sin => (v.sin(), v.cos()),
            Func::Cos => (v.cos(), -v.sin()),
            Func::Tan => {
                let t = v.tan();
                (t, 1.0 + t * t)
            }
            Func::Tanh => {
                let t = v.tanh();
                (t, 1.0 - t * t)
            }
            Func::Exp => {
                let e = v.exp();
                (e, e)
            }
            Func::Log => (v.ln(), 1.0 / v),
            Func::Sqrt => {
                let s = v.sqrt();
                (s, 0.5 / s)
            }
            Func::Abs => (v.abs(), if v < 0.0 { -1.0 } else { 1.0 }),
        };
        Dual {
            value,
            deriv: slope * self.deriv,
        }
    }
}

impl Expr {
    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Number of state variables the expression was declared over.
    pub fn state_dim(&self) -> usize {
        self.vars.len()
    }

    pub fn param_names(&self) -> &[String] {
        &self.params
    }

    /// Evaluates with parameter values given in declaration order.
    pub fn eval(&self, t: f64, y: &[f64], params: &[f64]) -> Result<f64, EvalError> {
        self.check_inputs(y, params)?;
        self.eval_node(&self.root, &|var| match var {
            Var::Time => t,
            Var::State(i) => y[i],
            Var::Param(i) => params[i],
        })
    }

    /// Evaluates value and derivative with respect to state variable `seed`.
    pub fn eval_dual(&self, t: f64, y: &[f64], params: &[f64], seed: usize) -> Result<Dual, EvalError> {
        self.check_inputs(y, params)?;
        if seed >= self.vars.len() {
            return Err(EvalError::SeedOutOfRange {
                seed,
                dim: self.vars.len(),
            });
        }
        self.eval_node(&self.root, &|var| match var {
            Var::Time => Dual::constant(t),
            Var::State(i) if i == seed => Dual::variable(y[i]),
            Var::State(i) => Dual::constant(y[i]),
            Var::Param(i) => Dual::constant(params[i]),
        })
    }

    /// Resolves named parameters from a map, in declaration order.
    pub fn bind_params(&self, params: &BTreeMap<String, f64>) -> Result<Vec<f64>, EvalError> {
        self.params
            .iter()
            .map(|name| {
                params
                    .get(name)
                    .copied()
                    .ok_or_else(|| EvalError::MissingParam(name.clone()))
            })
            .collect()
    }

    pub fn eval_with(&self, t: f64, y: &[f64], params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
        self.eval(t, y, &self.bind_params(params)?)
    }

    fn check_inputs(&self, y: &[f64], params: &[f64]) -> Result<(), EvalError> {
        if y.len() != self.vars.len() {
            return Err(EvalError::StateLength {
                expected: self.vars.len(),
                got: y.len(),
            });
        }
        if params.len() != self.params.len() {
            return Err(EvalError::ParamLength {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn eval_node<S: Scalar>(&self, node: &Node, lookup: &dyn Fn(Var) -> S) -> Result<S, EvalError> {
        let out = match node {
            Node::Const(v) => S::lift(*v),
            Node::Var(var) => lookup(*var),
            Node::Neg(inner) => -self.eval_node(inner, lookup)?,
            Node::Binary(op, lhs, rhs) => {
                let a = self.eval_node(lhs, lookup)?;
                let b = self.eval_node(rhs, lookup)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b.value() == 0.0 {
                            return Err(self.domain(DomainErrorKind::DivisionByZero, node));
                        }
                        a / b
                    }
                    BinaryOp::Pow => {
                        let (base, exponent) = (a.value(), b.value());
                        if base == 0.0 && exponent < 0.0 {
                            return Err(self.domain(DomainErrorKind::ZeroToNegativePower, node));
                        }
                        if base < 0.0 && exponent.fract() != 0.0 {
                            return Err(self.domain(DomainErrorKind::NegativeBaseFractionalPower, node));
                        }
                        a.powf(b)
                    }
                }
            }
            Node::Call(func, arg) => {
                let x = self.eval_node(arg, lookup)?;
                match func {
                    Func::Log if x.value() <= 0.0 => {
                        return Err(self.domain(DomainErrorKind::LogOfNonPositive, node))
                    }
                    Func::Sqrt if x.value() < 0.0 => {
                        return Err(self.domain(DomainErrorKind::SqrtOfNegative, node))
                    }
                    _ => x.apply(*func),
                }
            }
        };
        if !out.is_finite() {
            return Err(self.domain(DomainErrorKind::NonFinite, node));
        }
        Ok(out)
    }

    fn domain(&self, kind: DomainErrorKind, node: &Node) -> EvalError {
        EvalError::Domain {
            kind,
            node: NodeDisplay { node, expr: self }.to_string(),
        }
    }
}

struct NodeDisplay<'a> {
    node: &'a Node,
    expr: &'a Expr,
}

impl fmt::Display for NodeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |node| NodeDisplay { node, expr: self.expr };
        match self.node {
            Node::Const(v) => write!(f, "{v:?}"),
            Node::Var(Var::Time) => f.write_str(TIME_VAR),
            Node::Var(Var::State(i)) => f.write_str(&self.expr.vars[*i]),
            Node::Var(Var::Param(i)) => f.write_str(&self.expr.params[*i]),
            Node::Neg(inner) => write!(f, "(-{})", sub(inner)),
            Node::Binary(op, lhs, rhs) => write!(f, "({} {} {})", sub(lhs), op.symbol(), sub(rhs)),
            Node::Call(func, arg) => write!(f, "{}({})", func.name(), sub(arg)),
        }
    }
}

/// Canonical, fully parenthesised form; re-parses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        NodeDisplay {
            node: &self.root,
            expr: self,
        }
        .fmt(f)
    }
}
