//! Small expression language for metric factors, potentials, and generator
//! coefficients.
//!
//! Supported grammar: decimal constants (optional exponent part), declared
//! variables, `+ - * /`, unary minus, `^` with a constant non-negative integer
//! exponent, and the functions `exp`, `ln`, `sqrt`. Precedence from loosest to
//! tightest is add/sub, mul/div, unary minus, `^`, with `^` right-associative.
//! Unary minus binds looser than `^`, so `-q^2` parses as `-(q^2)`.
//!
//! Expressions are immutable trees behind [`std::sync::Arc`], so clones are
//! cheap and values can be shared and evaluated concurrently. Construction
//! applies constant folding (`2*3+1` collapses to `7`) and the safe identity
//! folds `x*1`, `x+0`, `x-0`, `x/1`, `x^1`; nothing else is simplified, so a
//! tree evaluates exactly as written.
//!
//! Integer powers evaluate by repeated multiplication. Together with the
//! parser's deterministic tree shapes this makes every evaluation reproducible
//! bit for bit, which the model-reduction checks rely on.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

const FUNCTIONS: [&str; 3] = ["exp", "ln", "sqrt"];

/// Ordered, deduplicated set of variable names an expression may reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSet {
    names: Arc<Vec<String>>,
}

impl VarSet {
    /// Builds a variable set. Names must be unique, non-empty, and must not
    /// shadow a function name.
    pub fn new(names: &[&str]) -> Result<Self> {
        let mut seen = Vec::with_capacity(names.len());
        for name in names {
            if name.is_empty() {
                return Err(Error::InvalidInput("empty variable name".into()));
            }
            if FUNCTIONS.contains(name) {
                return Err(Error::InvalidInput(format!(
                    "variable name `{name}` shadows a function"
                )));
            }
            if seen.iter().any(|s: &String| s == name) {
                return Err(Error::InvalidInput(format!(
                    "duplicate variable name `{name}`"
                )));
            }
            seen.push((*name).to_string());
        }
        Ok(Self {
            names: Arc::new(seen),
        })
    }

    /// Variable names in declaration order. Evaluation bindings use this order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Constant expression over this variable set.
    pub fn constant(&self, value: f64) -> ExprAst {
        ExprAst {
            vars: self.clone(),
            root: Arc::new(Node::Const(value)),
        }
    }

    /// Single-variable expression. Errors if `name` is not declared.
    pub fn var(&self, name: &str) -> Result<ExprAst> {
        let index = self.index_of(name).ok_or_else(|| {
            Error::InvalidInput(format!("variable `{name}` is not declared in this context"))
        })?;
        Ok(ExprAst {
            vars: self.clone(),
            root: Arc::new(Node::Var(index)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Pow(Arc<Node>, u32),
    Neg(Arc<Node>),
    Exp(Arc<Node>),
    Ln(Arc<Node>),
    Sqrt(Arc<Node>),
}

/// Immutable expression tree over a declared variable set.
#[derive(Debug, Clone)]
pub struct ExprAst {
    vars: VarSet,
    root: Arc<Node>,
}

fn is_zero(node: &Node) -> bool {
    matches!(node, Node::Const(c) if *c == 0.0)
}

// Smart constructors. They fold constant operands and the identity cases that
// cannot change an evaluation result or hide a domain error.

fn n_const(value: f64) -> Arc<Node> {
    Arc::new(Node::Const(value))
}

fn n_add(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (&*a, &*b) {
        (Node::Const(x), Node::Const(y)) => n_const(x + y),
        (Node::Const(c), _) if *c == 0.0 => b,
        (_, Node::Const(c)) if *c == 0.0 => a,
        _ => Arc::new(Node::Add(a, b)),
    }
}

fn n_sub(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (&*a, &*b) {
        (Node::Const(x), Node::Const(y)) => n_const(x - y),
        (_, Node::Const(c)) if *c == 0.0 => a,
        _ => Arc::new(Node::Sub(a, b)),
    }
}

fn n_mul(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (&*a, &*b) {
        (Node::Const(x), Node::Const(y)) => n_const(x * y),
        (Node::Const(c), _) if *c == 1.0 => b,
        (_, Node::Const(c)) if *c == 1.0 => a,
        _ => Arc::new(Node::Mul(a, b)),
    }
}

fn n_div(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (&*a, &*b) {
        (Node::Const(x), Node::Const(y)) if *y != 0.0 => n_const(x / y),
        (_, Node::Const(c)) if *c == 1.0 => a,
        _ => Arc::new(Node::Div(a, b)),
    }
}

fn n_pow(a: Arc<Node>, n: u32) -> Arc<Node> {
    match &*a {
        Node::Const(x) => n_const(pow_by_mul(*x, n)),
        _ if n == 1 => a,
        _ => Arc::new(Node::Pow(a, n)),
    }
}

fn n_neg(a: Arc<Node>) -> Arc<Node> {
    match &*a {
        Node::Const(x) => n_const(-x),
        _ => Arc::new(Node::Neg(a)),
    }
}

fn n_unary(f: fn(f64) -> f64, wrap: fn(Arc<Node>) -> Node, a: Arc<Node>) -> Arc<Node> {
    if let Node::Const(x) = &*a {
        let v = f(*x);
        if v.is_finite() {
            return n_const(v);
        }
    }
    Arc::new(wrap(a))
}

/// `x^n` by repeated multiplication, left to right. This is the evaluation
/// semantic for every `Pow` node; keeping it a single function pins the bit
/// pattern across parsing, folding, and evaluation.
fn pow_by_mul(x: f64, n: u32) -> f64 {
    let mut acc = 1.0_f64;
    for _ in 0..n {
        acc *= x;
    }
    acc
}

impl ExprAst {
    /// Parses `text` over the declared variables.
    pub fn parse(text: &str, vars: &VarSet) -> Result<Self> {
        let tokens = lex(text)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            input_len: text.len(),
            vars,
        };
        let root = parser.parse_expr()?;
        parser.expect_end()?;
        Ok(Self {
            vars: vars.clone(),
            root,
        })
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    /// Evaluates with `values` bound to the variables in declaration order.
    ///
    /// Domain violations (log or square root of a negative number, division
    /// by zero) and NaN results are reported as errors, never returned as
    /// silent NaN.
    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.vars.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} bindings, got {}",
                self.vars.len(),
                values.len()
            )));
        }
        let v = eval_node(&self.root, values)?;
        if v.is_nan() {
            return Err(Error::Domain("evaluation produced NaN".into()));
        }
        Ok(v)
    }

    /// Evaluates with named bindings. Every declared variable must be bound.
    pub fn eval_named(&self, bindings: &HashMap<&str, f64>) -> Result<f64> {
        let mut values = Vec::with_capacity(self.vars.len());
        for name in self.vars.names() {
            let v = bindings
                .get(name.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("missing binding for `{name}`")))?;
            values.push(*v);
        }
        self.eval(&values)
    }

    /// Exact symbolic derivative with respect to `var`. Derivatives of
    /// constants collapse to zero and constant subexpressions fold.
    pub fn differentiate(&self, var: &str) -> Result<Self> {
        let index = self.vars.index_of(var).ok_or_else(|| {
            Error::InvalidInput(format!(
                "cannot differentiate with respect to undeclared `{var}`"
            ))
        })?;
        Ok(Self {
            vars: self.vars.clone(),
            root: diff_node(&self.root, index),
        })
    }

    /// Rebuilds the expression over a new variable set, matching variables by
    /// name. Errors if a referenced variable is missing from `vars`.
    pub fn with_vars(&self, vars: &VarSet) -> Result<Self> {
        let mut map = Vec::with_capacity(self.vars.len());
        for name in self.vars.names() {
            map.push(vars.index_of(name));
        }
        let root = remap_node(&self.root, &map, self.vars.names())?;
        Ok(Self {
            vars: vars.clone(),
            root,
        })
    }

    /// Replaces every occurrence of `var` with `replacement`. The result is
    /// an expression over `replacement`'s variable set; any other variable
    /// referenced by `self` must exist there under the same name.
    pub fn substitute(&self, var: &str, replacement: &ExprAst) -> Result<Self> {
        let index = self.vars.index_of(var).ok_or_else(|| {
            Error::InvalidInput(format!("cannot substitute undeclared variable `{var}`"))
        })?;
        let mut map = Vec::with_capacity(self.vars.len());
        for (i, name) in self.vars.names().iter().enumerate() {
            if i == index {
                map.push(None);
            } else {
                map.push(replacement.vars.index_of(name));
            }
        }
        let root = subst_node(
            &self.root,
            index,
            &replacement.root,
            &map,
            self.vars.names(),
        )?;
        Ok(Self {
            vars: replacement.vars.clone(),
            root,
        })
    }

    fn combine(&self, rhs: &ExprAst, f: fn(Arc<Node>, Arc<Node>) -> Arc<Node>) -> ExprAst {
        assert_eq!(
            self.vars, rhs.vars,
            "combined expressions must share one variable set"
        );
        ExprAst {
            vars: self.vars.clone(),
            root: f(self.root.clone(), rhs.root.clone()),
        }
    }

    /// Sum of two expressions over the same variable set.
    ///
    /// The arithmetic combinators panic on mismatched variable sets; callers
    /// rebase with [`ExprAst::with_vars`] first.
    pub fn add(&self, rhs: &ExprAst) -> ExprAst {
        self.combine(rhs, n_add)
    }

    pub fn sub(&self, rhs: &ExprAst) -> ExprAst {
        self.combine(rhs, n_sub)
    }

    pub fn mul(&self, rhs: &ExprAst) -> ExprAst {
        self.combine(rhs, n_mul)
    }

    pub fn div(&self, rhs: &ExprAst) -> ExprAst {
        self.combine(rhs, n_div)
    }

    pub fn pow(&self, n: u32) -> ExprAst {
        ExprAst {
            vars: self.vars.clone(),
            root: n_pow(self.root.clone(), n),
        }
    }

    pub fn neg(&self) -> ExprAst {
        ExprAst {
            vars: self.vars.clone(),
            root: n_neg(self.root.clone()),
        }
    }

    pub fn exp(&self) -> ExprAst {
        ExprAst {
            vars: self.vars.clone(),
            root: n_unary(f64::exp, Node::Exp, self.root.clone()),
        }
    }

    pub fn ln(&self) -> ExprAst {
        ExprAst {
            vars: self.vars.clone(),
            root: n_unary(f64::ln, Node::Ln, self.root.clone()),
        }
    }

    pub fn sqrt(&self) -> ExprAst {
        ExprAst {
            vars: self.vars.clone(),
            root: n_unary(f64::sqrt, Node::Sqrt, self.root.clone()),
        }
    }

    /// True if the tree is literally a constant (after folding).
    pub fn as_constant(&self) -> Option<f64> {
        match &*self.root {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }
}

fn eval_node(node: &Node, values: &[f64]) -> Result<f64> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(i) => values[*i],
        Node::Add(a, b) => eval_node(a, values)? + eval_node(b, values)?,
        Node::Sub(a, b) => eval_node(a, values)? - eval_node(b, values)?,
        Node::Mul(a, b) => eval_node(a, values)? * eval_node(b, values)?,
        Node::Div(a, b) => {
            let num = eval_node(a, values)?;
            let den = eval_node(b, values)?;
            if den == 0.0 {
                return Err(Error::Domain("division by zero".into()));
            }
            num / den
        }
        Node::Pow(a, n) => pow_by_mul(eval_node(a, values)?, *n),
        Node::Neg(a) => -eval_node(a, values)?,
        Node::Exp(a) => eval_node(a, values)?.exp(),
        Node::Ln(a) => {
            let x = eval_node(a, values)?;
            if x <= 0.0 {
                return Err(Error::Domain(format!("ln of non-positive value {x}")));
            }
            x.ln()
        }
        Node::Sqrt(a) => {
            let x = eval_node(a, values)?;
            if x < 0.0 {
                return Err(Error::Domain(format!("sqrt of negative value {x}")));
            }
            x.sqrt()
        }
    })
}

fn diff_node(node: &Node, var: usize) -> Arc<Node> {
    match node {
        Node::Const(_) => n_const(0.0),
        Node::Var(i) => n_const(if *i == var { 1.0 } else { 0.0 }),
        Node::Add(a, b) => n_add(diff_node(a, var), diff_node(b, var)),
        Node::Sub(a, b) => {
            let da = diff_node(a, var);
            let db = diff_node(b, var);
            if is_zero(&db) {
                da
            } else if is_zero(&da) {
                n_neg(db)
            } else {
                n_sub(da, db)
            }
        }
        Node::Mul(a, b) => {
            let da = diff_node(a, var);
            let db = diff_node(b, var);
            let left = if is_zero(&da) {
                None
            } else {
                Some(n_mul(da, b.clone()))
            };
            let right = if is_zero(&db) {
                None
            } else {
                Some(n_mul(a.clone(), db))
            };
            match (left, right) {
                (Some(l), Some(r)) => n_add(l, r),
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => n_const(0.0),
            }
        }
        Node::Div(a, b) => {
            let da = diff_node(a, var);
            let db = diff_node(b, var);
            if is_zero(&db) {
                if is_zero(&da) {
                    n_const(0.0)
                } else {
                    n_div(da, b.clone())
                }
            } else {
                let num = if is_zero(&da) {
                    n_neg(n_mul(a.clone(), db))
                } else {
                    n_sub(n_mul(da, b.clone()), n_mul(a.clone(), db))
                };
                n_div(num, n_pow(b.clone(), 2))
            }
        }
        Node::Pow(a, n) => {
            if *n == 0 {
                return n_const(0.0);
            }
            let da = diff_node(a, var);
            if is_zero(&da) {
                return n_const(0.0);
            }
            let factor = n_mul(n_const(*n as f64), n_pow(a.clone(), n - 1));
            n_mul(factor, da)
        }
        Node::Neg(a) => {
            let da = diff_node(a, var);
            if is_zero(&da) {
                da
            } else {
                n_neg(da)
            }
        }
        Node::Exp(a) => {
            let da = diff_node(a, var);
            if is_zero(&da) {
                da
            } else {
                n_mul(Arc::new(Node::Exp(a.clone())), da)
            }
        }
        Node::Ln(a) => {
            let da = diff_node(a, var);
            if is_zero(&da) {
                da
            } else {
                n_div(da, a.clone())
            }
        }
        Node::Sqrt(a) => {
            let da = diff_node(a, var);
            if is_zero(&da) {
                da
            } else {
                n_div(da, n_mul(n_const(2.0), Arc::new(Node::Sqrt(a.clone()))))
            }
        }
    }
}

fn remap_node(node: &Node, map: &[Option<usize>], names: &[String]) -> Result<Arc<Node>> {
    Ok(match node {
        Node::Const(c) => n_const(*c),
        Node::Var(i) => match map[*i] {
            Some(j) => Arc::new(Node::Var(j)),
            None => {
                return Err(Error::InvalidInput(format!(
                    "variable `{}` is missing from the target variable set",
                    names[*i]
                )))
            }
        },
        Node::Add(a, b) => Arc::new(Node::Add(
            remap_node(a, map, names)?,
            remap_node(b, map, names)?,
        )),
        Node::Sub(a, b) => Arc::new(Node::Sub(
            remap_node(a, map, names)?,
            remap_node(b, map, names)?,
        )),
        Node::Mul(a, b) => Arc::new(Node::Mul(
            remap_node(a, map, names)?,
            remap_node(b, map, names)?,
        )),
        Node::Div(a, b) => Arc::new(Node::Div(
            remap_node(a, map, names)?,
            remap_node(b, map, names)?,
        )),
        Node::Pow(a, n) => Arc::new(Node::Pow(remap_node(a, map, names)?, *n)),
        Node::Neg(a) => Arc::new(Node::Neg(remap_node(a, map, names)?)),
        Node::Exp(a) => Arc::new(Node::Exp(remap_node(a, map, names)?)),
        Node::Ln(a) => Arc::new(Node::Ln(remap_node(a, map, names)?)),
        Node::Sqrt(a) => Arc::new(Node::Sqrt(remap_node(a, map, names)?)),
    })
}

fn subst_node(
    node: &Node,
    target: usize,
    replacement: &Arc<Node>,
    map: &[Option<usize>],
    names: &[String],
) -> Result<Arc<Node>> {
    Ok(match node {
        Node::Const(c) => n_const(*c),
        Node::Var(i) if *i == target => replacement.clone(),
        Node::Var(i) => match map[*i] {
            Some(j) => Arc::new(Node::Var(j)),
            None => {
                return Err(Error::InvalidInput(format!(
                    "variable `{}` is missing from the replacement's variable set",
                    names[*i]
                )))
            }
        },
        Node::Add(a, b) => Arc::new(Node::Add(
            subst_node(a, target, replacement, map, names)?,
            subst_node(b, target, replacement, map, names)?,
        )),
        Node::Sub(a, b) => Arc::new(Node::Sub(
            subst_node(a, target, replacement, map, names)?,
            subst_node(b, target, replacement, map, names)?,
        )),
        Node::Mul(a, b) => Arc::new(Node::Mul(
            subst_node(a, target, replacement, map, names)?,
            subst_node(b, target, replacement, map, names)?,
        )),
        Node::Div(a, b) => Arc::new(Node::Div(
            subst_node(a, target, replacement, map, names)?,
            subst_node(b, target, replacement, map, names)?,
        )),
        Node::Pow(a, n) => Arc::new(Node::Pow(
            subst_node(a, target, replacement, map, names)?,
            *n,
        )),
        Node::Neg(a) => Arc::new(Node::Neg(subst_node(a, target, replacement, map, names)?)),
        Node::Exp(a) => Arc::new(Node::Exp(subst_node(a, target, replacement, map, names)?)),
        Node::Ln(a) => Arc::new(Node::Ln(subst_node(a, target, replacement, map, names)?)),
        Node::Sqrt(a) => Arc::new(Node::Sqrt(subst_node(a, target, replacement, map, names)?)),
    })
}

// Lexer.

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

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        match c {
            '+' => tokens.push((start, Tok::Plus)),
            '-' => tokens.push((start, Tok::Minus)),
            '*' => tokens.push((start, Tok::Star)),
            '/' => tokens.push((start, Tok::Slash)),
            '^' => tokens.push((start, Tok::Caret)),
            '(' => tokens.push((start, Tok::LParen)),
            ')' => tokens.push((start, Tok::RParen)),
            '0'..='9' => {
                i = lex_number_end(bytes, i);
                let span = &text[start..i];
                let value: f64 = span.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    message: format!("invalid number `{span}`"),
                })?;
                tokens.push((start, Tok::Num(value)));
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                return Err(Error::Syntax {
                    offset: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
        i += 1;
    }
    Ok(tokens)
}

/// Scans a number starting at `start`: digits, optional fraction, optional
/// exponent. An `e`/`E` is consumed only when followed by a valid exponent
/// tail, so `2e` lexes as the number `2` followed by the identifier `e`.
fn lex_number_end(bytes: &[u8], start: usize) -> usize {
    let mut i = start;
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
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}

// Parser.

struct Parser<'a> {
    tokens: &'a [(usize, Tok)],
    pos: usize,
    input_len: usize,
    vars: &'a VarSet,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.tokens.get(self.pos)
    }

    fn end_offset(&self) -> usize {
        self.input_len
    }

    fn current_offset(&self) -> usize {
        match self.peek() {
            Some((off, _)) => *off,
            None => self.end_offset(),
        }
    }

    fn expect_end(&self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some((off, tok)) => Err(Error::Syntax {
                offset: *off,
                message: format!("unexpected token `{}`", token_text(tok)),
            }),
        }
    }

    fn parse_expr(&mut self) -> Result<Arc<Node>> {
        let mut node = self.parse_term()?;
        loop {
            match self.peek() {
                Some((_, Tok::Plus)) => {
                    self.pos += 1;
                    node = n_add(node, self.parse_term()?);
                }
                Some((_, Tok::Minus)) => {
                    self.pos += 1;
                    node = n_sub(node, self.parse_term()?);
                }
                _ => return Ok(node),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Arc<Node>> {
        let mut node = self.parse_unary()?;
        loop {
            match self.peek() {
                Some((_, Tok::Star)) => {
                    self.pos += 1;
                    node = n_mul(node, self.parse_unary()?);
                }
                Some((_, Tok::Slash)) => {
                    self.pos += 1;
                    node = n_div(node, self.parse_unary()?);
                }
                _ => return Ok(node),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Arc<Node>> {
        if let Some((_, Tok::Minus)) = self.peek() {
            self.pos += 1;
            return Ok(n_neg(self.parse_unary()?));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Arc<Node>> {
        let base = self.parse_atom()?;
        if let Some((caret_off, Tok::Caret)) = self.peek().cloned() {
            self.pos += 1;
            // Right-associative chain; the folded right-hand side must be a
            // constant non-negative integer.
            let rhs = self.parse_power()?;
            let n = match &*rhs {
                Node::Const(c) if c.fract() == 0.0 && *c >= 0.0 && *c <= u32::MAX as f64 => {
                    *c as u32
                }
                _ => {
                    return Err(Error::Syntax {
                        offset: caret_off,
                        message: "exponent must be a non-negative integer constant".into(),
                    })
                }
            };
            return Ok(n_pow(base, n));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Arc<Node>> {
        let (offset, tok) = match self.peek().cloned() {
            Some(t) => t,
            None => {
                return Err(Error::Syntax {
                    offset: self.end_offset(),
                    message: "expected a value".into(),
                })
            }
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(n_const(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if FUNCTIONS.contains(&name.as_str()) {
                    match self.peek() {
                        Some((_, Tok::LParen)) => {
                            self.pos += 1;
                            let arg = self.parse_expr()?;
                            self.expect_rparen()?;
                            Ok(match name.as_str() {
                                "exp" => n_unary(f64::exp, Node::Exp, arg),
                                "ln" => n_unary(f64::ln, Node::Ln, arg),
                                _ => n_unary(f64::sqrt, Node::Sqrt, arg),
                            })
                        }
                        _ => Err(Error::Syntax {
                            offset: self.current_offset(),
                            message: format!("expected `(` after function `{name}`"),
                        }),
                    }
                } else if let Some(index) = self.vars.index_of(&name) {
                    Ok(Arc::new(Node::Var(index)))
                } else {
                    Err(Error::UnknownIdentifier { offset, name })
                }
            }
            other => Err(Error::Syntax {
                offset,
                message: format!("expected a value, found `{}`", token_text(&other)),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.peek() {
            Some((_, Tok::RParen)) => {
                self.pos += 1;
                Ok(())
            }
            Some((off, tok)) => Err(Error::Syntax {
                offset: *off,
                message: format!("expected `)`, found `{}`", token_text(tok)),
            }),
            None => Err(Error::Syntax {
                offset: self.end_offset(),
                message: "expected `)`".into(),
            }),
        }
    }
}

fn token_text(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("{v}"),
        Tok::Ident(s) => s.clone(),
        Tok::Plus => "+".into(),
        Tok::Minus => "-".into(),
        Tok::Star => "*".into(),
        Tok::Slash => "/".into(),
        Tok::Caret => "^".into(),
        Tok::LParen => "(".into(),
        Tok::RParen => ")".into(),
    }
}

// Pretty printer. Parenthesization is chosen so that re-parsing the printed
// text rebuilds a tree that evaluates identically, including float grouping.

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(..) => 3,
        Node::Pow(..) => 4,
        _ => 5,
    }
}

fn fmt_node(node: &Node, names: &[String], out: &mut String) {
    match node {
        Node::Const(c) => {
            if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                out.push('(');
                out.push_str(&format!("{c}"));
                out.push(')');
            } else {
                out.push_str(&format!("{c}"));
            }
        }
        Node::Var(i) => out.push_str(&names[*i]),
        Node::Add(a, b) => {
            fmt_child(a, names, out, 1, false);
            out.push('+');
            fmt_child(b, names, out, 1, true);
        }
        Node::Sub(a, b) => {
            fmt_child(a, names, out, 1, false);
            out.push('-');
            fmt_child(b, names, out, 1, true);
        }
        Node::Mul(a, b) => {
            fmt_child(a, names, out, 2, false);
            out.push('*');
            fmt_child(b, names, out, 2, true);
        }
        Node::Div(a, b) => {
            fmt_child(a, names, out, 2, false);
            out.push('/');
            fmt_child(b, names, out, 2, true);
        }
        Node::Neg(a) => {
            out.push('-');
            fmt_child(a, names, out, 3, true);
        }
        Node::Pow(a, n) => {
            fmt_child(a, names, out, 5, true);
            out.push('^');
            out.push_str(&format!("{n}"));
        }
        Node::Exp(a) | Node::Ln(a) | Node::Sqrt(a) => {
            out.push_str(match node {
                Node::Exp(_) => "exp(",
                Node::Ln(_) => "ln(",
                _ => "sqrt(",
            });
            fmt_node(a, names, out);
            out.push(')');
        }
    }
}

/// Writes a child, parenthesizing when its precedence is too loose for the
/// position. Right-hand operands of `-`, `/`, and `*` at equal precedence are
/// parenthesized so left-associative re-parsing cannot regroup them.
fn fmt_child(node: &Node, names: &[String], out: &mut String, parent: u8, tight: bool) {
    let prec = precedence(node);
    let need = if tight { prec <= parent } else { prec < parent };
    // A right-associative exponent base must be atomic either way.
    let need = need && !(parent == 3 && prec > 3);
    if need {
        out.push('(');
        fmt_node(node, names, out);
        out.push(')');
    } else {
        fmt_node(node, names, out);
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        fmt_node(&self.root, self.vars.names(), &mut out);
        f.write_str(&out)
    }
}
