//! Scalar expressions over named real variables.
//!
//! Expressions are parsed once against a declared variable list, evaluated
//! with IEEE-754 double precision, and differentiated symbolically. Kinked
//! intrinsics (`abs`, `sign`, `min`, `max`) are differentiated through their
//! almost-everywhere derivative; evaluating such a derivative within
//! [`NONSMOOTH_TOL`] of the kink raises the `nonsmooth` flag on the result
//! rather than failing.

mod ast;
mod lexer;
mod parser;

pub(crate) use ast::{BinOp, Func, Node};

use serde::Serialize;
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Half-width of the band around a kink (argument of `sign`, tie of
/// `min`/`max`, zero of `abs`) inside which derivative evaluation is flagged
/// as nonsmooth.
pub const NONSMOOTH_TOL: f64 = 1e-9;

/// Parse failure with a 1-based source location.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(pos: lexer::Pos, message: impl Into<String>) -> Self {
        ParseError {
            line: pos.line,
            col: pos.col,
            message: message.into(),
        }
    }
}

/// Evaluation failure. Domain violations identify the offending
/// subexpression as it would be written in source.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero in `{subexpr}`")]
    DivisionByZero { subexpr: String },
    #[error("{func} applied outside its domain ({detail}) in `{subexpr}`")]
    Domain {
        func: &'static str,
        detail: String,
        subexpr: String,
    },
    #[error("non-finite result from `{subexpr}`")]
    NonFinite { subexpr: String },
    #[error("expression expects {expected} variable values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("point does not bind variable `{name}`")]
    UnboundVariable { name: String },
}

/// Result of an evaluation: the value plus whether any kinked derivative
/// construct was evaluated within [`NONSMOOTH_TOL`] of its kink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluated {
    pub value: f64,
    pub nonsmooth: bool,
}

/// A scalar expression together with its declared variable list.
///
/// The variable list fixes both the set of legal identifiers and the order
/// of values expected by [`ScalarExpr::eval`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    node: Node,
    vars: Vec<String>,
}

impl ScalarExpr {
    /// Parse `source` against the declared variables.
    pub fn parse(source: &str, vars: &[&str]) -> Result<ScalarExpr, ParseError> {
        let vars: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        let node = parser::parse_nodes(source, &vars)?;
        Ok(ScalarExpr { node, vars })
    }

    /// Declared variables, in evaluation order.
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Evaluate at a point given as a slice ordered like [`ScalarExpr::vars`].
    pub fn eval(&self, point: &[f64]) -> Result<Evaluated, EvalError> {
        if point.len() != self.vars.len() {
            return Err(EvalError::ArityMismatch {
                expected: self.vars.len(),
                got: point.len(),
            });
        }
        let mut nonsmooth = false;
        let value = eval_node(&self.node, point, &self.vars, &mut nonsmooth)?;
        Ok(Evaluated { value, nonsmooth })
    }

    /// Evaluate at a point given as a name-to-value map.
    pub fn eval_named(&self, point: &HashMap<String, f64>) -> Result<Evaluated, EvalError> {
        let mut vals = Vec::with_capacity(self.vars.len());
        for name in &self.vars {
            match point.get(name) {
                Some(v) => vals.push(*v),
                None => {
                    return Err(EvalError::UnboundVariable { name: name.clone() })
                }
            }
        }
        self.eval(&vals)
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn differentiate(&self, var: &str) -> Result<ScalarExpr, EvalError> {
        let idx = self
            .vars
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| EvalError::UnboundVariable { name: var.into() })?;
        Ok(ScalarExpr {
            node: diff_node(&self.node, idx),
            vars: self.vars.clone(),
        })
    }

    /// Render the expression; the output re-parses to the same tree.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        self.node.fmt_with(&self.vars, &mut out);
        out
    }

    /// Rebind the expression onto a superset variable list (used when a
    /// subsystem expression joins a larger interconnected system).
    pub fn reindex(&self, new_vars: &[&str]) -> Result<ScalarExpr, EvalError> {
        let new_vars: Vec<String> = new_vars.iter().map(|s| s.to_string()).collect();
        let mut map = Vec::with_capacity(self.vars.len());
        for name in &self.vars {
            let idx = new_vars
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| EvalError::UnboundVariable { name: name.clone() })?;
            map.push(idx);
        }
        Ok(ScalarExpr {
            node: remap_vars(&self.node, &map),
            vars: new_vars,
        })
    }

    /// Substitute `replacement` for every occurrence of `var`. The
    /// replacement must be declared over the same variable list.
    pub fn substitute(&self, var: &str, replacement: &ScalarExpr) -> Result<ScalarExpr, EvalError> {
        if replacement.vars != self.vars {
            let mapped = replacement.reindex(
                &self.vars.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            )?;
            return self.substitute(var, &mapped);
        }
        let idx = self
            .vars
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| EvalError::UnboundVariable { name: var.into() })?;
        Ok(ScalarExpr {
            node: subst_var(&self.node, idx, &replacement.node),
            vars: self.vars.clone(),
        })
    }

    pub(crate) fn from_node(node: Node, vars: Vec<String>) -> ScalarExpr {
        ScalarExpr { node, vars }
    }

    pub(crate) fn node(&self) -> &Node {
        &self.node
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pretty())
    }
}

fn show(node: &Node, vars: &[String]) -> String {
    let mut s = String::new();
    node.fmt_with(vars, &mut s);
    s
}

fn eval_node(
    node: &Node,
    vals: &[f64],
    vars: &[String],
    ns: &mut bool,
) -> Result<f64, EvalError> {
    let value = match node {
        Node::Num(v) => *v,
        Node::Var(i) => vals[*i],
        Node::Neg(inner) => -eval_node(inner, vals, vars, ns)?,
        Node::Bin(op, lhs, rhs) => {
            let a = eval_node(lhs, vals, vars, ns)?;
            let b = eval_node(rhs, vals, vars, ns)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero {
                            subexpr: show(node, vars),
                        });
                    }
                    a / b
                }
                BinOp::Pow => {
                    let v = a.powf(b);
                    if v.is_nan() && !a.is_nan() && !b.is_nan() {
                        return Err(EvalError::Domain {
                            func: "pow",
                            detail: format!("base {a:?} with non-integer exponent {b:?}"),
                            subexpr: show(node, vars),
                        });
                    }
                    v
                }
            }
        }
        Node::Call(func, args) => {
            let a = eval_node(&args[0], vals, vars, ns)?;
            match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tan => a.tan(),
                Func::Exp => a.exp(),
                Func::Ln => {
                    if a <= 0.0 {
                        return Err(EvalError::Domain {
                            func: "ln",
                            detail: format!("argument {a:?} is not positive"),
                            subexpr: show(node, vars),
                        });
                    }
                    a.ln()
                }
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(EvalError::Domain {
                            func: "sqrt",
                            detail: format!("argument {a:?} is negative"),
                            subexpr: show(node, vars),
                        });
                    }
                    a.sqrt()
                }
                Func::Abs => a.abs(),
                Func::Sign => {
                    if a.abs() <= NONSMOOTH_TOL {
                        *ns = true;
                    }
                    if a == 0.0 {
                        0.0
                    } else {
                        a.signum()
                    }
                }
                Func::Min | Func::Max => {
                    let b = eval_node(&args[1], vals, vars, ns)?;
                    match func {
                        Func::Min => a.min(b),
                        _ => a.max(b),
                    }
                }
            }
        }
    };
    if !value.is_finite() {
        return Err(EvalError::NonFinite {
            subexpr: show(node, vars),
        });
    }
    Ok(value)
}

/// True for nodes built only from `+ - * neg` over literals and variables:
/// total, smooth, and flag-free, so they may be folded away.
fn is_total_smooth(node: &Node) -> bool {
    match node {
        Node::Num(_) | Node::Var(_) => true,
        Node::Neg(inner) => is_total_smooth(inner),
        Node::Bin(BinOp::Add | BinOp::Sub | BinOp::Mul, lhs, rhs) => {
            is_total_smooth(lhs) && is_total_smooth(rhs)
        }
        _ => false,
    }
}

// Smart constructors used by the differentiator. Folds are applied only when
// they cannot change domain errors or nonsmooth flags of the evaluation.

fn num(v: f64) -> Node {
    Node::Num(v)
}

fn is_const(node: &Node, v: f64) -> bool {
    matches!(node, Node::Num(x) if *x == v)
}

fn add(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(x), Node::Num(y)) if (x + y).is_finite() => return num(x + y),
        (Node::Num(x), _) if *x == 0.0 => return b,
        (_, Node::Num(y)) if *y == 0.0 => return a,
        _ => {}
    }
    Node::Bin(BinOp::Add, Box::new(a), Box::new(b))
}

fn sub(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(x), Node::Num(y)) if (x - y).is_finite() => return num(x - y),
        (_, Node::Num(y)) if *y == 0.0 => return a,
        (Node::Num(x), _) if *x == 0.0 => return neg(b),
        _ => {}
    }
    Node::Bin(BinOp::Sub, Box::new(a), Box::new(b))
}

fn neg(a: Node) -> Node {
    match a {
        Node::Num(x) => num(-x),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(x), Node::Num(y)) if (x * y).is_finite() => return num(x * y),
        (Node::Num(x), _) if *x == 1.0 => return b,
        (_, Node::Num(y)) if *y == 1.0 => return a,
        (Node::Num(x), _) if *x == 0.0 && is_total_smooth(&b) => return num(0.0),
        (_, Node::Num(y)) if *y == 0.0 && is_total_smooth(&a) => return num(0.0),
        _ => {}
    }
    Node::Bin(BinOp::Mul, Box::new(a), Box::new(b))
}

fn div(a: Node, b: Node) -> Node {
    if is_const(&b, 1.0) {
        return a;
    }
    Node::Bin(BinOp::Div, Box::new(a), Box::new(b))
}

fn powc(base: Node, exponent: f64) -> Node {
    if exponent == 1.0 {
        return base;
    }
    if exponent == 0.0 && is_total_smooth(&base) {
        return num(1.0);
    }
    Node::Bin(BinOp::Pow, Box::new(base), Box::new(num(exponent)))
}

fn call1(func: Func, arg: Node) -> Node {
    Node::Call(func, vec![arg])
}

fn diff_node(node: &Node, var: usize) -> Node {
    match node {
        Node::Num(_) => num(0.0),
        Node::Var(i) => num(if *i == var { 1.0 } else { 0.0 }),
        Node::Neg(inner) => neg(diff_node(inner, var)),
        Node::Bin(op, lhs, rhs) => {
            let du = diff_node(lhs, var);
            let dv = diff_node(rhs, var);
            match op {
                BinOp::Add => add(du, dv),
                BinOp::Sub => sub(du, dv),
                BinOp::Mul => add(mul(du, (**rhs).clone()), mul((**lhs).clone(), dv)),
                BinOp::Div => div(
                    sub(mul(du, (**rhs).clone()), mul((**lhs).clone(), dv)),
                    mul((**rhs).clone(), (**rhs).clone()),
                ),
                BinOp::Pow => match **rhs {
                    // Constant exponent: n * u^(n-1) * du.
                    Node::Num(n) => mul(mul(num(n), powc((**lhs).clone(), n - 1.0)), du),
                    // General case: u^v * (dv ln u + v du / u).
                    _ => mul(
                        Node::Bin(BinOp::Pow, lhs.clone(), rhs.clone()),
                        add(
                            mul(dv, call1(Func::Ln, (**lhs).clone())),
                            div(mul((**rhs).clone(), du), (**lhs).clone()),
                        ),
                    ),
                },
            }
        }
        Node::Call(func, args) => {
            let u = args[0].clone();
            let du = diff_node(&args[0], var);
            match func {
                Func::Sin => mul(call1(Func::Cos, u), du),
                Func::Cos => neg(mul(call1(Func::Sin, u), du)),
                Func::Tan => div(du, powc(call1(Func::Cos, u), 2.0)),
                Func::Exp => mul(call1(Func::Exp, u), du),
                Func::Ln => div(du, u),
                Func::Sqrt => div(du, mul(num(2.0), call1(Func::Sqrt, u))),
                Func::Abs => mul(call1(Func::Sign, u), du),
                // Zero almost everywhere; keep the sign() so evaluation near
                // the discontinuity still raises the nonsmooth flag.
                Func::Sign => mul(num(0.0), call1(Func::Sign, u)),
                Func::Min | Func::Max => {
                    let v = args[1].clone();
                    let dv = diff_node(&args[1], var);
                    // min(u,v) = ((u+v) - |u-v|)/2, so
                    // d min = ((du+dv) - sign(u-v)(du-dv))/2; max flips the sign.
                    // At a tie sign() is 0 (midpoint selection) and the
                    // evaluation is flagged nonsmooth.
                    let switch = mul(
                        call1(Func::Sign, sub(u, v)),
                        sub(du.clone(), dv.clone()),
                    );
                    let total = add(du, dv);
                    match func {
                        Func::Min => mul(num(0.5), sub(total, switch)),
                        _ => mul(num(0.5), add(total, switch)),
                    }
                }
            }
        }
    }
}

fn remap_vars(node: &Node, map: &[usize]) -> Node {
    match node {
        Node::Num(v) => Node::Num(*v),
        Node::Var(i) => Node::Var(map[*i]),
        Node::Neg(inner) => Node::Neg(Box::new(remap_vars(inner, map))),
        Node::Bin(op, lhs, rhs) => Node::Bin(
            *op,
            Box::new(remap_vars(lhs, map)),
            Box::new(remap_vars(rhs, map)),
        ),
        Node::Call(func, args) => Node::Call(
            *func,
            args.iter().map(|a| remap_vars(a, map)).collect(),
        ),
    }
}

fn subst_var(node: &Node, var: usize, replacement: &Node) -> Node {
    match node {
        Node::Num(v) => Node::Num(*v),
        Node::Var(i) if *i == var => replacement.clone(),
        Node::Var(i) => Node::Var(*i),
        Node::Neg(inner) => Node::Neg(Box::new(subst_var(inner, var, replacement))),
        Node::Bin(op, lhs, rhs) => Node::Bin(
            *op,
            Box::new(subst_var(lhs, var, replacement)),
            Box::new(subst_var(rhs, var, replacement)),
        ),
        Node::Call(func, args) => Node::Call(
            *func,
            args.iter().map(|a| subst_var(a, var, replacement)).collect(),
        ),
    }
}
