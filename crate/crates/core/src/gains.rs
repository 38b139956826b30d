//! Comparison-class gain functions.
//!
//! Gains are the scalar shape functions of the certificates: decay rates,
//! input gains, and the cross-gains whose composition the small-gain test
//! constrains. A [`GainFn`] is a closed algebra over expression-backed and
//! table-backed gains: sums, positive scalings, compositions, inverses, and
//! the reflection `r -> -g(-r)` that shows up when a gain is pushed through
//! a sign change. Class membership (zero at zero, strictly increasing,
//! unbounded where claimed) is checked numerically on a window and reported
//! as a [`ClassCertificate`] rather than assumed.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{BinOp, EvalError, Node, ParseError, ScalarExpr};
use crate::numeric::{bisect_value, linspace, BisectError, InterpError, MonotoneCubic};

/// Absolute tolerance for the zero-at-zero class check.
pub const CLASS_ZERO_ATOL: f64 = 1e-12;
/// A gain counts as unbounded once the growth probe sees this magnitude.
pub const UNBOUNDED_THRESHOLD: f64 = 1e6;
/// Doubling steps the growth probe takes beyond the window edge.
const UNBOUNDED_MAX_DOUBLINGS: u32 = 40;
/// Default half-width of the certification window.
pub const DEFAULT_WINDOW_RADIUS: f64 = 10.0;
/// Default number of grid intervals for certification and the small-gain
/// test.
pub const DEFAULT_CERT_GRID: usize = 4096;
/// Punctured neighbourhood of the origin excluded from the small-gain
/// grid; the condition is vacuous at r = 0.
const SMALL_GAIN_HOLE: f64 = 1e-8;
/// Iteration cap for inversion by bisection.
const INVERT_MAX_ITER: u32 = 200;

/// The four comparison classes a gain can claim. Extended classes are
/// defined on all of the real line; plain classes only on nonnegative
/// arguments. The `inf` variants additionally claim unbounded growth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComparisonClass {
    #[serde(rename = "K")]
    K,
    #[serde(rename = "Kinf")]
    KInfty,
    #[serde(rename = "extended-K")]
    ExtendedK,
    #[serde(rename = "extended-Kinf")]
    ExtendedKInfty,
}

impl ComparisonClass {
    pub fn is_extended(self) -> bool {
        matches!(
            self,
            ComparisonClass::ExtendedK | ComparisonClass::ExtendedKInfty
        )
    }

    pub fn is_unbounded(self) -> bool {
        matches!(
            self,
            ComparisonClass::KInfty | ComparisonClass::ExtendedKInfty
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ComparisonClass::K => "K",
            ComparisonClass::KInfty => "Kinf",
            ComparisonClass::ExtendedK => "extended-K",
            ComparisonClass::ExtendedKInfty => "extended-Kinf",
        }
    }

    fn from_parts(extended: bool, unbounded: bool) -> ComparisonClass {
        match (extended, unbounded) {
            (false, false) => ComparisonClass::K,
            (false, true) => ComparisonClass::KInfty,
            (true, false) => ComparisonClass::ExtendedK,
            (true, true) => ComparisonClass::ExtendedKInfty,
        }
    }
}

impl fmt::Display for ComparisonClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComparisonClass {
    type Err = GainError;

    fn from_str(s: &str) -> Result<ComparisonClass, GainError> {
        match s {
            "K" => Ok(ComparisonClass::K),
            "Kinf" => Ok(ComparisonClass::KInfty),
            "extended-K" => Ok(ComparisonClass::ExtendedK),
            "extended-Kinf" => Ok(ComparisonClass::ExtendedKInfty),
            other => Err(GainError::UnknownClass(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GainError {
    #[error("unknown comparison class `{0}`; expected K, Kinf, extended-K, or extended-Kinf")]
    UnknownClass(String),
    #[error("gain expression: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error("gain of class {class} is undefined at r = {r}; negative arguments need an extended class")]
    NegativeArgument { class: ComparisonClass, r: f64 },
    #[error("cannot invert gain at y = {y}: {detail}")]
    Inversion { y: f64, detail: String },
    #[error("{context} requires an extended-class gain, got class {class}")]
    NotExtended {
        context: &'static str,
        class: ComparisonClass,
    },
    #[error("{0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone)]
pub(crate) enum GainKind {
    /// Closed-form expression in the single variable `r`.
    Expr(ScalarExpr),
    /// Tabulated values with monotone cubic interpolation.
    Table(Arc<MonotoneCubic>),
    /// Pointwise inverse of a (strictly increasing) gain, by bisection.
    Inverse(Box<GainFn>),
    /// outer(inner(r)).
    Compose(Box<GainFn>, Box<GainFn>),
    Sum(Box<GainFn>, Box<GainFn>),
    /// k * g(r) with k > 0.
    Scaled(f64, Box<GainFn>),
    /// -g(-r); maps extended classes to themselves.
    Reflect(Box<GainFn>),
    /// Identically zero, for subsystems without a disturbance channel.
    Zero,
}

/// A scalar gain with a declared comparison class and a certification
/// window `[0, radius]` (or `[-radius, radius]` when extended).
///
/// The declared class is a claim until [`GainFn::certify_class`] confirms
/// it; constructors on this type propagate class labels through the
/// algebra but never re-certify.
#[derive(Debug, Clone)]
pub struct GainFn {
    kind: GainKind,
    class: ComparisonClass,
    radius: f64,
}

fn expr_vars(e: &ScalarExpr) -> Vec<String> {
    e.vars().to_vec()
}

fn expr_neg(e: &ScalarExpr) -> ScalarExpr {
    // Fold double negation so reflections of odd closed forms stay readable.
    let node = match e.node() {
        Node::Neg(inner) => (**inner).clone(),
        other => Node::Neg(Box::new(other.clone())),
    };
    ScalarExpr::from_node(node, expr_vars(e))
}

fn expr_sum(a: &ScalarExpr, b: &ScalarExpr) -> ScalarExpr {
    ScalarExpr::from_node(
        Node::Bin(
            BinOp::Add,
            Box::new(a.node().clone()),
            Box::new(b.node().clone()),
        ),
        expr_vars(a),
    )
}

fn expr_scale(k: f64, e: &ScalarExpr) -> ScalarExpr {
    ScalarExpr::from_node(
        Node::Bin(
            BinOp::Mul,
            Box::new(Node::Num(k)),
            Box::new(e.node().clone()),
        ),
        expr_vars(e),
    )
}

impl GainFn {
    /// Parse a gain from an expression in the single variable `r`.
    pub fn from_expr(
        source: &str,
        class: ComparisonClass,
        radius: f64,
    ) -> Result<GainFn, GainError> {
        check_radius(radius)?;
        let expr = ScalarExpr::parse(source, &["r"])?;
        Ok(GainFn {
            kind: GainKind::Expr(expr),
            class,
            radius,
        })
    }

    /// Wrap a tabulated function. Extended classes need the table to span
    /// both signs; the window is the largest symmetric range it covers.
    pub fn from_table(table: MonotoneCubic, class: ComparisonClass) -> Result<GainFn, GainError> {
        let (lo, hi) = table.range();
        let radius = if class.is_extended() {
            if lo >= 0.0 {
                return Err(GainError::InvalidParameter(format!(
                    "extended-class table must cover negative arguments, starts at {lo}"
                )));
            }
            (-lo).min(hi)
        } else {
            hi
        };
        check_radius(radius)?;
        Ok(GainFn {
            kind: GainKind::Table(Arc::new(table)),
            class,
            radius,
        })
    }

    /// The identity gain `r`, extended and unbounded.
    pub fn identity(radius: f64) -> GainFn {
        GainFn::from_expr("r", ComparisonClass::ExtendedKInfty, radius)
            .expect("identity expression always parses")
    }

    /// The zero gain, for systems with no disturbance input. Not a member
    /// of any comparison class; certification reports that honestly.
    pub fn zero(radius: f64) -> GainFn {
        GainFn {
            kind: GainKind::Zero,
            class: ComparisonClass::K,
            radius,
        }
    }

    pub(crate) fn kind(&self) -> &GainKind {
        &self.kind
    }

    pub fn class(&self) -> ComparisonClass {
        self.class
    }

    /// Half-width of the certification window.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, GainKind::Zero)
    }

    /// Relabel the certification window, typically to shrink it to the
    /// range where a composed or inverted gain is actually evaluable.
    pub fn with_radius(mut self, radius: f64) -> GainFn {
        self.radius = radius;
        self
    }

    /// Evaluate at `r`. Plain-class gains reject negative arguments.
    pub fn eval(&self, r: f64) -> Result<f64, GainError> {
        if r < 0.0 && !self.class.is_extended() {
            return Err(GainError::NegativeArgument {
                class: self.class,
                r,
            });
        }
        match &self.kind {
            GainKind::Expr(e) => Ok(e.eval(&[r])?.value),
            GainKind::Table(t) => Ok(t.eval(r)?),
            GainKind::Inverse(inner) => invert_eval(inner, r),
            GainKind::Compose(outer, inner) => outer.eval(inner.eval(r)?),
            GainKind::Sum(a, b) => Ok(a.eval(r)? + b.eval(r)?),
            GainKind::Scaled(k, g) => Ok(k * g.eval(r)?),
            // `+ 0.0` normalizes -0.0 so exact zeros survive reflection.
            GainKind::Reflect(g) => Ok(-g.eval(-r)? + 0.0),
            GainKind::Zero => Ok(0.0),
        }
    }

    /// The pointwise inverse. Preserves class; the inverse of a bounded
    /// class-K gain is only defined on that gain's range, which shows up
    /// as an inversion error rather than a narrowed label.
    pub fn invert(&self) -> GainFn {
        GainFn {
            kind: GainKind::Inverse(Box::new(self.clone())),
            class: self.class,
            radius: self.radius,
        }
    }

    /// The reflection `r -> -g(-r)`, defined for extended-class gains.
    /// For odd gains this is `g` itself; in general it has the same class.
    pub fn reflect(&self) -> Result<GainFn, GainError> {
        if !self.class.is_extended() {
            return Err(GainError::NotExtended {
                context: "reflection",
                class: self.class,
            });
        }
        let kind = match &self.kind {
            GainKind::Expr(e) => {
                let neg_r = expr_neg(&ScalarExpr::parse("r", &["r"]).unwrap());
                let mirrored = e
                    .substitute("r", &neg_r)
                    .expect("gain expressions share the variable r");
                GainKind::Expr(expr_neg(&mirrored))
            }
            GainKind::Zero => GainKind::Zero,
            _ => GainKind::Reflect(Box::new(self.clone())),
        };
        Ok(GainFn {
            kind,
            class: self.class,
            radius: self.radius,
        })
    }

    /// outer(inner(r)). Extended and unbounded only when both factors are;
    /// the window is the inner gain's. Folds to a closed form when both
    /// sides are expressions.
    pub fn compose(outer: &GainFn, inner: &GainFn) -> GainFn {
        let class = ComparisonClass::from_parts(
            outer.class.is_extended() && inner.class.is_extended(),
            outer.class.is_unbounded() && inner.class.is_unbounded(),
        );
        let kind = match (&outer.kind, &inner.kind) {
            (GainKind::Expr(o), GainKind::Expr(i)) => GainKind::Expr(
                o.substitute("r", i)
                    .expect("gain expressions share the variable r"),
            ),
            // Class-K outer maps 0 to 0, so composing with zero is zero.
            (GainKind::Zero, _) | (_, GainKind::Zero) => GainKind::Zero,
            _ => GainKind::Compose(Box::new(outer.clone()), Box::new(inner.clone())),
        };
        GainFn {
            kind,
            class,
            radius: inner.radius,
        }
    }

    /// Pointwise sum. Unbounded when either term is; extended only when
    /// both are.
    pub fn sum(a: &GainFn, b: &GainFn) -> GainFn {
        let class = ComparisonClass::from_parts(
            a.class.is_extended() && b.class.is_extended(),
            a.class.is_unbounded() || b.class.is_unbounded(),
        );
        let radius = a.radius.min(b.radius);
        let kind = match (&a.kind, &b.kind) {
            (GainKind::Expr(ea), GainKind::Expr(eb)) => GainKind::Expr(expr_sum(ea, eb)),
            (GainKind::Zero, _) => b.kind.clone(),
            (_, GainKind::Zero) => a.kind.clone(),
            _ => GainKind::Sum(Box::new(a.clone()), Box::new(b.clone())),
        };
        GainFn { kind, class, radius }
    }

    /// k * g with k > 0, which preserves the class.
    pub fn scaled(k: f64, g: &GainFn) -> Result<GainFn, GainError> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(GainError::InvalidParameter(format!(
                "scale factor must be positive and finite, got {k}"
            )));
        }
        let kind = match &g.kind {
            GainKind::Expr(e) => GainKind::Expr(expr_scale(k, e)),
            GainKind::Zero => GainKind::Zero,
            GainKind::Scaled(k0, inner) => GainKind::Scaled(k * k0, inner.clone()),
            _ => GainKind::Scaled(k, Box::new(g.clone())),
        };
        Ok(GainFn {
            kind,
            class: g.class,
            radius: g.radius,
        })
    }

    /// Human-readable description of the gain's structure.
    pub fn describe(&self) -> String {
        match &self.kind {
            GainKind::Expr(e) => e.pretty(),
            GainKind::Table(t) => {
                let (lo, hi) = t.range();
                format!("table on [{lo}, {hi}] ({} knots)", t.knots().0.len())
            }
            GainKind::Inverse(g) => format!("inv({})", g.describe()),
            GainKind::Compose(o, i) => format!("({}) of ({})", o.describe(), i.describe()),
            GainKind::Sum(a, b) => format!("{} + {}", a.describe(), b.describe()),
            GainKind::Scaled(k, g) => format!("{k} * ({})", g.describe()),
            GainKind::Reflect(g) => format!("reflect({})", g.describe()),
            GainKind::Zero => "0".to_string(),
        }
    }

    /// Check the declared class on the certification window with the
    /// default grid density.
    pub fn certify_class(&self) -> ClassCertificate {
        self.certify_class_with(DEFAULT_CERT_GRID)
    }

    /// Check the declared class by sampling `grid` intervals across the
    /// window: zero at zero, strictly increasing between consecutive
    /// samples, and (for `inf` claims) growth past [`UNBOUNDED_THRESHOLD`]
    /// under repeated doubling beyond the window edge. Tabulated gains
    /// cannot be probed beyond their knots; the growth claim is then
    /// accepted with a note.
    pub fn certify_class_with(&self, grid: usize) -> ClassCertificate {
        let grid = grid.max(2);
        let mut cert = ClassCertificate {
            claimed: self.class,
            holds: true,
            window_radius: self.radius,
            grid_points: 0,
            zero_at_zero: true,
            strictly_increasing: true,
            unbounded: None,
            failure_point: None,
            notes: Vec::new(),
        };
        if self.is_zero() {
            cert.holds = false;
            cert.strictly_increasing = false;
            cert.failure_point = Some(0.0);
            cert.notes
                .push("identically zero gain is not strictly increasing".to_string());
            return cert;
        }

        let mut pts = if self.class.is_extended() {
            let grid = grid + grid % 2;
            linspace(-self.radius, self.radius, grid + 1)
        } else {
            linspace(0.0, self.radius, grid + 1)
        };
        // The class checks pivot on the origin; pin it exactly.
        let zero_idx = if self.class.is_extended() {
            pts.len() / 2
        } else {
            0
        };
        pts[zero_idx] = 0.0;
        cert.grid_points = pts.len();

        let mut values = Vec::with_capacity(pts.len());
        for &r in &pts {
            match self.eval(r) {
                Ok(v) => values.push(v),
                Err(e) => {
                    cert.holds = false;
                    cert.failure_point = Some(r);
                    cert.notes.push(format!("evaluation failed at r = {r}: {e}"));
                    return cert;
                }
            }
        }

        if values[zero_idx].abs() > CLASS_ZERO_ATOL {
            cert.zero_at_zero = false;
            cert.holds = false;
            cert.failure_point = Some(0.0);
            cert.notes.push(format!(
                "value at zero is {:.3e}, above tolerance {CLASS_ZERO_ATOL:.0e}",
                values[zero_idx]
            ));
        }
        for i in 0..values.len() - 1 {
            if !(values[i + 1] > values[i]) {
                cert.strictly_increasing = false;
                cert.holds = false;
                cert.failure_point.get_or_insert(pts[i + 1]);
                cert.notes.push(format!(
                    "not strictly increasing between r = {} and r = {}",
                    pts[i],
                    pts[i + 1]
                ));
                break;
            }
        }

        if self.class.is_unbounded() {
            let up = self.probe_growth(1.0, &mut cert.notes);
            let down = if self.class.is_extended() {
                self.probe_growth(-1.0, &mut cert.notes)
            } else {
                true
            };
            cert.unbounded = Some(up && down);
            if !(up && down) {
                cert.holds = false;
            }
        }
        cert
    }

    /// Doubling probe for unbounded growth on one side of the window.
    fn probe_growth(&self, sign: f64, notes: &mut Vec<String>) -> bool {
        let mut p = self.radius;
        for _ in 0..UNBOUNDED_MAX_DOUBLINGS {
            p *= 2.0;
            match self.eval(sign * p) {
                Ok(v) => {
                    if sign * v >= UNBOUNDED_THRESHOLD {
                        return true;
                    }
                }
                Err(GainError::Interp(InterpError::OutOfRange { .. }))
                | Err(GainError::Inversion { .. }) => {
                    notes.push(format!(
                        "growth probe capped at the evaluable range near r = {}; \
                         unboundedness accepted as claimed",
                        sign * p
                    ));
                    return true;
                }
                Err(GainError::Eval(EvalError::NonFinite { .. })) => {
                    // Overflowing f64 is growth evidence, not a failure.
                    return true;
                }
                Err(e) => {
                    notes.push(format!("growth probe failed at r = {}: {e}", sign * p));
                    return false;
                }
            }
        }
        notes.push(format!(
            "growth probe did not reach {UNBOUNDED_THRESHOLD:.0e} by r = {}",
            sign * p
        ));
        false
    }
}

fn check_radius(radius: f64) -> Result<(), GainError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(GainError::InvalidParameter(format!(
            "window radius must be positive and finite, got {radius}"
        )))
    }
}

/// Solve `inner(r) = y` for a strictly increasing `inner`. Probes the
/// origin first so that exact zeros invert to exactly zero, then brackets
/// by doubling out to the window edge and bisects.
fn invert_eval(inner: &GainFn, y: f64) -> Result<f64, GainError> {
    let tol = 1e-12 * (1.0 + y.abs());
    let g0 = inner.eval(0.0)?;
    if (g0 - y).abs() <= tol {
        return Ok(0.0);
    }
    let cap = inner.radius;
    let sign = if y > g0 {
        1.0
    } else {
        if !inner.class.is_extended() {
            return Err(GainError::Inversion {
                y,
                detail: format!(
                    "value below the range of a class-{} gain",
                    inner.class
                ),
            });
        }
        -1.0
    };
    let mut edge = cap.min(1.0);
    loop {
        let v = inner.eval(sign * edge)?;
        if sign * (v - y) >= 0.0 {
            break;
        }
        if edge >= cap {
            return Err(GainError::Inversion {
                y,
                detail: format!("no bracket within the window radius {cap}"),
            });
        }
        edge = (edge * 2.0).min(cap);
    }
    let (lo, hi) = if sign > 0.0 { (0.0, edge) } else { (-edge, 0.0) };
    bisect_value(&mut |r| inner.eval(r), y, lo, hi, tol, INVERT_MAX_ITER).map_err(|e| match e {
        BisectError::Eval(g) => g,
        BisectError::BracketFailure { glo, ghi, .. } => GainError::Inversion {
            y,
            detail: format!("target escaped the bracket [{glo}, {ghi}]"),
        },
        BisectError::NoConvergence { best, residual } => GainError::Inversion {
            y,
            detail: format!("bisection stalled at {best} with residual {residual}"),
        },
    })
}

/// Outcome of checking a declared comparison class on a window.
#[derive(Debug, Clone, Serialize)]
pub struct ClassCertificate {
    pub claimed: ComparisonClass,
    pub holds: bool,
    pub window_radius: f64,
    pub grid_points: usize,
    pub zero_at_zero: bool,
    pub strictly_increasing: bool,
    /// Growth probe outcome; absent when the claim is not an `inf` class.
    pub unbounded: Option<bool>,
    /// First grid point where a check failed, if any.
    pub failure_point: Option<f64>,
    pub notes: Vec<String>,
}

/// Outcome of the small-gain test on the cross-gain pair.
#[derive(Debug, Clone, Serialize)]
pub struct SmallGainReport {
    pub satisfied: bool,
    pub window_radius: f64,
    pub grid_points: usize,
    /// Smallest signed gap `sign(r) * (r - (phi1 of phi2)(r))` on the grid;
    /// the condition requires it to be strictly positive.
    pub min_gap: f64,
    /// Smallest gap relative to `|r|`, a scale-free contraction margin.
    pub min_relative_gap: f64,
    /// Grid point attaining the smallest relative gap.
    pub worst_r: f64,
    /// Closed form or structure of the composed cross-gain.
    pub composition: String,
}

/// Check the small-gain condition: the composed cross-gain must pull every
/// nonzero `r` strictly towards the origin, i.e. `(phi1 of phi2)(r) < r`
/// for `r > 0` and `> r` for `r < 0`, sampled on a symmetric grid.
pub fn check_small_gain(
    phi1: &GainFn,
    phi2: &GainFn,
    window_radius: f64,
    grid: usize,
) -> Result<SmallGainReport, GainError> {
    for (name, g) in [("phi1", phi1), ("phi2", phi2)] {
        if !g.class().is_extended() {
            return Err(GainError::NotExtended {
                context: match name {
                    "phi1" => "small-gain test (first cross-gain)",
                    _ => "small-gain test (second cross-gain)",
                },
                class: g.class(),
            });
        }
    }
    check_radius(window_radius)?;
    let composed = GainFn::compose(phi1, phi2);
    let grid = grid.max(2);
    let grid = grid + grid % 2;
    let pts = linspace(-window_radius, window_radius, grid + 1);

    let mut min_gap = f64::INFINITY;
    let mut min_rel = f64::INFINITY;
    let mut worst_r = f64::NAN;
    let mut satisfied = true;
    for &r in &pts {
        if r.abs() < SMALL_GAIN_HOLE {
            continue;
        }
        let c = composed.eval(r)?;
        let gap = r.signum() * (r - c);
        if gap <= 0.0 {
            satisfied = false;
        }
        if gap < min_gap {
            min_gap = gap;
        }
        let rel = gap / r.abs();
        if rel < min_rel {
            min_rel = rel;
            worst_r = r;
        }
    }
    Ok(SmallGainReport {
        satisfied,
        window_radius,
        grid_points: pts.len(),
        min_gap,
        min_relative_gap: min_rel,
        worst_r,
        composition: composed.describe(),
    })
}

/// Result of rewriting a dissipation-form certificate in implication form.
#[derive(Debug, Clone)]
pub struct ImplicationGains {
    /// Input gain of the implication form.
    pub gamma_hat: GainFn,
    /// Decay rate of the implication form.
    pub alpha_hat: GainFn,
}

/// Convert a dissipation-form certificate with decay `chi` and input term
/// `phi` into implication form: whenever the barrier sits below
/// `-gamma_hat(|u|)`, its derivative obeys the decay `-alpha_hat`. The
/// split parameter `c` in (0, 1) trades gain against decay:
/// `gamma_hat(r) = -chi^{-1}(-phi(r) / c)` and `alpha_hat = (1 - c) chi`.
pub fn dissipation_to_implication(
    chi: &GainFn,
    phi: &GainFn,
    c: f64,
) -> Result<ImplicationGains, GainError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(GainError::InvalidParameter(format!(
            "split parameter must lie strictly between 0 and 1, got {c}"
        )));
    }
    if !chi.class().is_extended() {
        return Err(GainError::NotExtended {
            context: "dissipation-form decay rate",
            class: chi.class(),
        });
    }
    let alpha_hat = GainFn::scaled(1.0 - c, chi)?;
    let outer = chi.invert().reflect()?;
    let scaled_phi = GainFn::scaled(1.0 / c, phi)?;
    let mut gamma_hat = GainFn::compose(&outer, &scaled_phi);

    // The inverse of chi is only evaluable inside chi's window, which caps
    // the arguments gamma_hat accepts; shrink the window to match so the
    // class certificate samples where the gain is defined. The inversion
    // target sits strictly inside the reachable range so that bisection
    // tolerance cannot push the capped edge past it.
    let reach = -(chi.eval(-chi.radius())?);
    let cap = c * reach;
    if cap.is_finite() && cap > 0.0 {
        let phi_edge = phi.eval(phi.radius())?;
        if phi_edge > cap {
            let target = (cap - 1e-9 * (1.0 + cap)).max(0.5 * cap);
            let r_star = invert_eval(phi, target)?;
            gamma_hat = gamma_hat.with_radius(r_star);
        }
    }
    Ok(ImplicationGains {
        gamma_hat,
        alpha_hat,
    })
}
