//! Scalar and vector fields built from parsed expressions.
//!
//! A [`ScalarField`] carries its symbolic gradient. A [`VectorField`] is a
//! family of components driven by a partitioned variable list
//! `x1-block ++ x2-block ++ u-block`; each component is the time derivative
//! of one named state variable, which is what ties barrier gradients to
//! dynamics in [`lie_derivative`].

use crate::expr::{EvalError, Evaluated, ParseError, ScalarExpr};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("component count {components} does not match declared outputs {outputs}")]
    ComponentCount { components: usize, outputs: usize },
    #[error("duplicate variable `{0}` in partition")]
    DuplicateVariable(String),
    #[error("output variable `{0}` is not in the state blocks")]
    UnknownOutput(String),
    #[error("barrier variable `{0}` is not an output of the vector field")]
    UnmatchedBarrierVariable(String),
    #[error("point has {got} coordinates, field expects {expected}")]
    PointLength { expected: usize, got: usize },
}

/// Differentiable scalar function of named variables, with symbolic gradient.
#[derive(Debug, Clone)]
pub struct ScalarField {
    expr: ScalarExpr,
    gradient: Vec<ScalarExpr>,
}

impl ScalarField {
    pub fn new(expr: ScalarExpr) -> Result<ScalarField, FieldError> {
        let gradient = expr
            .vars()
            .to_vec()
            .iter()
            .map(|v| expr.differentiate(v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScalarField { expr, gradient })
    }

    pub fn parse(source: &str, vars: &[&str]) -> Result<ScalarField, FieldError> {
        Ok(Self::new(ScalarExpr::parse(source, vars)?)?)
    }

    pub fn expr(&self) -> &ScalarExpr {
        &self.expr
    }

    pub fn vars(&self) -> &[String] {
        self.expr.vars()
    }

    /// Partial derivative expressions, ordered like [`ScalarField::vars`].
    pub fn gradient(&self) -> &[ScalarExpr] {
        &self.gradient
    }

    pub fn value(&self, point: &[f64]) -> Result<Evaluated, EvalError> {
        self.expr.eval(point)
    }

    /// Gradient vector at a point; `nonsmooth` is set if any component was
    /// evaluated within the kink tolerance.
    pub fn gradient_at(&self, point: &[f64]) -> Result<(Vec<f64>, bool), EvalError> {
        let mut out = Vec::with_capacity(self.gradient.len());
        let mut nonsmooth = false;
        for g in &self.gradient {
            let e = g.eval(point)?;
            nonsmooth |= e.nonsmooth;
            out.push(e.value);
        }
        Ok((out, nonsmooth))
    }
}

/// Vector field over a partitioned variable list.
///
/// `components[k]` is the time derivative of state variable `outputs[k]`.
/// Every component is declared over the full ordered list
/// `x1_vars ++ x2_vars ++ u_vars`.
#[derive(Debug, Clone)]
pub struct VectorField {
    components: Vec<ScalarExpr>,
    outputs: Vec<String>,
    x1_vars: Vec<String>,
    x2_vars: Vec<String>,
    u_vars: Vec<String>,
    all_vars: Vec<String>,
}

impl VectorField {
    /// Parse components against the partition. `outputs` names the state
    /// variable driven by each component, in component order.
    pub fn parse(
        components: &[&str],
        outputs: &[&str],
        x1_vars: &[&str],
        x2_vars: &[&str],
        u_vars: &[&str],
    ) -> Result<VectorField, FieldError> {
        if components.len() != outputs.len() {
            return Err(FieldError::ComponentCount {
                components: components.len(),
                outputs: outputs.len(),
            });
        }
        let mut all: Vec<&str> = Vec::new();
        for v in x1_vars.iter().chain(x2_vars).chain(u_vars) {
            if all.contains(v) {
                return Err(FieldError::DuplicateVariable(v.to_string()));
            }
            all.push(v);
        }
        for o in outputs {
            if !x1_vars.contains(o) && !x2_vars.contains(o) {
                return Err(FieldError::UnknownOutput(o.to_string()));
            }
        }
        let parsed = components
            .iter()
            .map(|c| ScalarExpr::parse(c, &all))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorField {
            components: parsed,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            x1_vars: x1_vars.iter().map(|s| s.to_string()).collect(),
            x2_vars: x2_vars.iter().map(|s| s.to_string()).collect(),
            u_vars: u_vars.iter().map(|s| s.to_string()).collect(),
            all_vars: all.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Dimensions `(n1, n2, m)` of the variable partition.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.x1_vars.len(), self.x2_vars.len(), self.u_vars.len())
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn x1_vars(&self) -> &[String] {
        &self.x1_vars
    }

    pub fn x2_vars(&self) -> &[String] {
        &self.x2_vars
    }

    pub fn u_vars(&self) -> &[String] {
        &self.u_vars
    }

    /// Full ordered variable list `x1 ++ x2 ++ u`.
    pub fn vars(&self) -> &[String] {
        &self.all_vars
    }

    pub fn state_dim(&self) -> usize {
        self.x1_vars.len() + self.x2_vars.len()
    }

    pub fn components(&self) -> &[ScalarExpr] {
        &self.components
    }

    /// Evaluate all components at `point` (ordered like [`VectorField::vars`]).
    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (slot, comp) in out.iter_mut().zip(&self.components) {
            *slot = comp.eval(point)?.value;
        }
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.components.len()];
        self.eval_into(point, &mut out)?;
        Ok(out)
    }
}

/// Precomputed index binding for repeated Lie-derivative evaluation of one
/// barrier against one vector field.
#[derive(Debug, Clone)]
pub struct LieOperator {
    /// For each barrier variable: its coordinate in the field's point layout.
    var_slots: Vec<usize>,
    /// For each barrier variable: the field component that drives it.
    comp_slots: Vec<usize>,
}

impl LieOperator {
    pub fn new(h: &ScalarField, f: &VectorField) -> Result<LieOperator, FieldError> {
        let mut var_slots = Vec::with_capacity(h.vars().len());
        let mut comp_slots = Vec::with_capacity(h.vars().len());
        for v in h.vars() {
            let slot = f
                .vars()
                .iter()
                .position(|w| w == v)
                .ok_or_else(|| FieldError::UnmatchedBarrierVariable(v.clone()))?;
            let comp = f
                .outputs()
                .iter()
                .position(|w| w == v)
                .ok_or_else(|| FieldError::UnmatchedBarrierVariable(v.clone()))?;
            var_slots.push(slot);
            comp_slots.push(comp);
        }
        Ok(LieOperator {
            var_slots,
            comp_slots,
        })
    }

    /// `grad h(x) . f(x, u)` at a full point `x1 ++ x2 ++ u`; `scratch` must
    /// hold `h`'s variable count.
    pub fn eval(
        &self,
        h: &ScalarField,
        f: &VectorField,
        point: &[f64],
        scratch: &mut Vec<f64>,
    ) -> Result<Evaluated, EvalError> {
        scratch.clear();
        for &slot in &self.var_slots {
            scratch.push(point[slot]);
        }
        let mut total = 0.0;
        let mut nonsmooth = false;
        for (k, grad) in h.gradient().iter().enumerate() {
            let g = grad.eval(scratch)?;
            nonsmooth |= g.nonsmooth;
            if g.value == 0.0 {
                continue;
            }
            let fi = f.components()[self.comp_slots[k]].eval(point)?;
            nonsmooth |= fi.nonsmooth;
            total += g.value * fi.value;
        }
        Ok(Evaluated {
            value: total,
            nonsmooth,
        })
    }
}

/// `grad h(x) . f(x, u)` at a named point. The barrier's variables must each
/// be an output of `f`.
pub fn lie_derivative(
    h: &ScalarField,
    f: &VectorField,
    point: &HashMap<String, f64>,
) -> Result<Evaluated, FieldError> {
    let op = LieOperator::new(h, f)?;
    let mut vals = Vec::with_capacity(f.vars().len());
    for name in f.vars() {
        match point.get(name) {
            Some(v) => vals.push(*v),
            None => {
                return Err(FieldError::Eval(EvalError::UnboundVariable {
                    name: name.clone(),
                }))
            }
        }
    }
    let mut scratch = Vec::new();
    Ok(op.eval(h, f, &vals, &mut scratch)?)
}
