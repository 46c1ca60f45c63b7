//! A small arithmetic expression language for profiles and coefficients.
//!
//! Grammar: numbers, the constant `pi`, the variables `s x1 x2 y1 y2 t`,
//! binary `+ - * / ^`, unary minus, parentheses and the functions
//! `sin cos exp sqrt abs min max`. `^` binds tighter than unary minus and is
//! right associative; the other binary operators are left associative.
//! There are no conditionals.
//!
//! Besides plain evaluation, [`Expression::eval_jet`] propagates first and
//! second derivatives with respect to one variable in forward mode, which
//! gives exact derivatives of profiles without symbolic rewriting.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ExprError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    S,
    X1,
    X2,
    Y1,
    Y2,
    T,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::S => "s",
            Var::X1 => "x1",
            Var::X2 => "x2",
            Var::Y1 => "y1",
            Var::Y2 => "y2",
            Var::T => "t",
        }
    }

    fn from_name(name: &str) -> Option<Var> {
        Some(match name {
            "s" => Var::S,
            "x1" => Var::X1,
            "x2" => Var::X2,
            "y1" => Var::Y1,
            "y2" => Var::Y2,
            "t" => Var::T,
            _ => return None,
        })
    }
}

/// Values bound to the variables during evaluation. Unbound variables read 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Vars {
    pub s: f64,
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
    pub t: f64,
}

impl Vars {
    pub fn s(s: f64) -> Self {
        Vars { s, ..Default::default() }
    }

    pub fn x(x1: f64, x2: f64) -> Self {
        Vars { x1, x2, ..Default::default() }
    }

    pub fn y(y1: f64, y2: f64) -> Self {
        Vars { y1, y2, ..Default::default() }
    }

    pub fn get(&self, v: Var) -> f64 {
        match v {
            Var::S => self.s,
            Var::X1 => self.x1,
            Var::X2 => self.x2,
            Var::Y1 => self.y1,
            Var::Y2 => self.y2,
            Var::T => self.t,
        }
    }
}

/// Value together with its first and second derivative in one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

// Plain methods keep the evaluator free of operator-trait imports.
#[allow(clippy::should_implement_trait)]
impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Jet2 { v, d1: 0.0, d2: 0.0 }
    }

    pub fn variable(v: f64) -> Self {
        Jet2 { v, d1: 1.0, d2: 0.0 }
    }

    pub fn add(self, o: Jet2) -> Jet2 {
        Jet2 { v: self.v + o.v, d1: self.d1 + o.d1, d2: self.d2 + o.d2 }
    }

    pub fn sub(self, o: Jet2) -> Jet2 {
        Jet2 { v: self.v - o.v, d1: self.d1 - o.d1, d2: self.d2 - o.d2 }
    }

    pub fn neg(self) -> Jet2 {
        Jet2 { v: -self.v, d1: -self.d1, d2: -self.d2 }
    }

    pub fn scale(self, c: f64) -> Jet2 {
        Jet2 { v: c * self.v, d1: c * self.d1, d2: c * self.d2 }
    }

    pub fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        }
    }

    fn is_constant(&self) -> bool {
        self.d1 == 0.0 && self.d2 == 0.0
    }

    /// Applies a scalar function given its value and two derivatives at `self.v`.
    pub fn chain(self, g: f64, g1: f64, g2: f64) -> Jet2 {
        if self.is_constant() {
            return Jet2::constant(g);
        }
        Jet2 { v: g, d1: g1 * self.d1, d2: g2 * self.d1 * self.d1 + g1 * self.d2 }
    }

    pub fn sin(self) -> Jet2 {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet2 {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Jet2 {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Binary { op: BinOp, lhs: Box<Node>, rhs: Box<Node>, pos: usize },
    Call { func: Func, args: Vec<Node>, pos: usize },
}

impl PartialEq for Node {
    // Source positions are ignored so that formatting does not matter.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Node::Num(a), Node::Num(b)) => a == b,
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Binary { op: o1, lhs: l1, rhs: r1, .. }, Node::Binary { op: o2, lhs: l2, rhs: r2, .. }) => {
                o1 == o2 && l1 == l2 && r1 == r2
            }
            (Node::Call { func: f1, args: a1, .. }, Node::Call { func: f2, args: a2, .. }) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

/// A parsed expression. Equality compares syntax trees.
#[derive(Clone)]
pub struct Expression {
    source: String,
    root: Node,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expression {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expression {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expression::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for Expression {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
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

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                } else {
                    return Err(ExprError::Parse { position: j + 1, message: "malformed exponent".into() });
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| ExprError::Parse { position: pos, message: format!("malformed number '{text}'") })?;
            out.push((Tok::Num(v), pos));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else {
            let t = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(ExprError::Parse { position: pos, message: format!("unexpected character '{c}'") }),
            };
            out.push((t, pos));
            i += 1;
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self) -> ExprError {
        let message = match self.peek() {
            Tok::End => "unexpected end of input".to_string(),
            Tok::Num(v) => format!("unexpected number {v}"),
            Tok::Ident(s) => format!("unexpected identifier '{s}'"),
            Tok::Op(c) => format!("unexpected '{c}'"),
            Tok::LParen => "unexpected '('".into(),
            Tok::RParen => "unexpected ')'".into(),
            Tok::Comma => "unexpected ','".into(),
        };
        ExprError::Parse { position: self.pos(), message }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            let (_, pos) = self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            let (_, pos) = self.bump();
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match *self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if let Tok::Op('^') = *self.peek() {
            let (_, pos) = self.bump();
            let exp = self.unary()?;
            return Ok(Node::Binary { op: BinOp::Pow, lhs: Box::new(base), rhs: Box::new(exp), pos });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected());
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                let pos = self.pos();
                self.bump();
                if *self.peek() == Tok::LParen {
                    let (func, arity) = Func::from_name(&name).ok_or_else(|| ExprError::Parse {
                        position: pos,
                        message: format!("unknown function '{name}'"),
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    if *self.peek() != Tok::RParen {
                        return Err(self.unexpected());
                    }
                    self.bump();
                    if args.len() != arity {
                        return Err(ExprError::Parse {
                            position: pos,
                            message: format!("'{name}' takes {arity} argument(s), got {}", args.len()),
                        });
                    }
                    return Ok(Node::Call { func, args, pos });
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                Var::from_name(&name).map(Node::Var).ok_or_else(|| ExprError::Parse {
                    position: pos,
                    message: format!("unknown identifier '{name}'"),
                })
            }
            _ => Err(self.unexpected()),
        }
    }
}

fn eval_err(pos: usize, message: &str) -> ExprError {
    ExprError::Eval { position: pos, message: message.to_string() }
}

fn checked(j: Jet2, pos: usize) -> Result<Jet2, ExprError> {
    if j.is_finite() {
        Ok(j)
    } else {
        Err(eval_err(pos, "non-finite result"))
    }
}

fn eval_node(node: &Node, vars: &Vars, wrt: Option<Var>) -> Result<Jet2, ExprError> {
    match node {
        Node::Num(v) => Ok(Jet2::constant(*v)),
        Node::Var(v) => {
            let x = vars.get(*v);
            Ok(if Some(*v) == wrt { Jet2::variable(x) } else { Jet2::constant(x) })
        }
        Node::Neg(a) => Ok(eval_node(a, vars, wrt)?.neg()),
        Node::Binary { op, lhs, rhs, pos } => {
            let a = eval_node(lhs, vars, wrt)?;
            let b = eval_node(rhs, vars, wrt)?;
            let r = match op {
                BinOp::Add => a.add(b),
                BinOp::Sub => a.sub(b),
                BinOp::Mul => a.mul(b),
                BinOp::Div => {
                    if b.v == 0.0 {
                        return Err(eval_err(*pos, "division by zero"));
                    }
                    let inv = b.chain(1.0 / b.v, -1.0 / (b.v * b.v), 2.0 / (b.v * b.v * b.v));
                    a.mul(inv)
                }
                BinOp::Pow => pow(a, b, *pos)?,
            };
            checked(r, *pos)
        }
        Node::Call { func, args, pos } => {
            let a = eval_node(&args[0], vars, wrt)?;
            let r = match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Sqrt => {
                    if a.v < 0.0 {
                        return Err(eval_err(*pos, "square root of a negative number"));
                    }
                    let r = a.v.sqrt();
                    if a.is_constant() {
                        Jet2::constant(r)
                    } else {
                        a.chain(r, 0.5 / r, -0.25 / (r * a.v))
                    }
                }
                Func::Abs => {
                    let sg = if a.v < 0.0 { -1.0 } else { 1.0 };
                    a.scale(sg)
                }
                Func::Min | Func::Max => {
                    let b = eval_node(&args[1], vars, wrt)?;
                    let take_a = if *func == Func::Min { a.v <= b.v } else { a.v >= b.v };
                    if take_a {
                        a
                    } else {
                        b
                    }
                }
            };
            checked(r, *pos)
        }
    }
}

fn pow(a: Jet2, b: Jet2, pos: usize) -> Result<Jet2, ExprError> {
    if b.is_constant() {
        let c = b.v;
        let v = a.v.powf(c);
        if !v.is_finite() {
            return Err(eval_err(pos, "power is not defined here"));
        }
        if a.is_constant() {
            return Ok(Jet2::constant(v));
        }
        let g1 = if c == 0.0 { 0.0 } else { c * a.v.powf(c - 1.0) };
        let g2 = if c == 0.0 || c == 1.0 { 0.0 } else { c * (c - 1.0) * a.v.powf(c - 2.0) };
        return Ok(a.chain(v, g1, g2));
    }
    if a.v <= 0.0 {
        return Err(eval_err(pos, "variable exponent requires a positive base"));
    }
    let ln = a.chain(a.v.ln(), 1.0 / a.v, -1.0 / (a.v * a.v));
    Ok(b.mul(ln).exp())
}

fn collect_vars(node: &Node, out: &mut BTreeSet<Var>) {
    match node {
        Node::Num(_) => {}
        Node::Var(v) => {
            out.insert(*v);
        }
        Node::Neg(a) => collect_vars(a, out),
        Node::Binary { lhs, rhs, .. } => {
            collect_vars(lhs, out);
            collect_vars(rhs, out);
        }
        Node::Call { args, .. } => args.iter().for_each(|a| collect_vars(a, out)),
    }
}

impl Expression {
    pub fn parse(src: &str) -> Result<Expression, ExprError> {
        let toks = tokenize(src)?;
        let mut p = Parser { toks, at: 0 };
        let root = p.expr()?;
        if *p.peek() != Tok::End {
            return Err(p.unexpected());
        }
        Ok(Expression { source: src.to_string(), root })
    }

    /// A constant expression.
    pub fn constant(v: f64) -> Expression {
        Expression { source: format!("{v:?}"), root: Node::Num(v) }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        collect_vars(&self.root, &mut out);
        out
    }

    /// Checks that only the listed variables occur; reports the first offender.
    pub fn check_variables(&self, allowed: &[Var]) -> Result<(), ExprError> {
        let mut stray = None;
        find_stray(&self.root, allowed, &mut stray);
        match stray {
            None => Ok(()),
            Some(v) => {
                let pos = self.source.find(v.name()).map(|i| self.source[..i].chars().count() + 1).unwrap_or(1);
                Err(ExprError::Parse { position: pos, message: format!("variable '{}' is not available here", v.name()) })
            }
        }
    }

    pub fn eval(&self, vars: &Vars) -> Result<f64, ExprError> {
        Ok(eval_node(&self.root, vars, None)?.v)
    }

    /// Value and first two derivatives with respect to `wrt`.
    pub fn eval_jet(&self, vars: &Vars, wrt: Var) -> Result<Jet2, ExprError> {
        eval_node(&self.root, vars, Some(wrt))
    }
}

fn find_stray(node: &Node, allowed: &[Var], out: &mut Option<Var>) {
    if out.is_some() {
        return;
    }
    match node {
        Node::Num(_) => {}
        Node::Var(v) => {
            if !allowed.contains(v) {
                *out = Some(*v);
            }
        }
        Node::Neg(a) => find_stray(a, allowed, out),
        Node::Binary { lhs, rhs, .. } => {
            find_stray(lhs, allowed, out);
            find_stray(rhs, allowed, out);
        }
        Node::Call { args, .. } => args.iter().for_each(|a| find_stray(a, allowed, out)),
    }
}
