//! Construction of a composed barrier for two interconnected subsystems.
//!
//! Given cross-gains `phi1`, `phi2` whose composition stays strictly below
//! the identity away from zero, this module builds the pieces needed to merge
//! two barrier certificates into one:
//!
//! * [`build_rho`] tabulates a slope-bounded averaging width from the gap
//!   between the identity and `phi1(phi2(r))`,
//! * [`build_phi`] turns that width into a strictly increasing scaling
//!   function pinched between the inverse of `phi1` and `phi2`,
//! * [`compose_barrier`] assembles `h = min{ phi(h1), h2 }` together with its
//!   input gain and decay rate, and
//! * [`ComposedDini`] evaluates the lower Dini derivative of the composed
//!   barrier along a vector field, tracking which branch is active.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, ScalarExpr};
use crate::field::{FieldError, LieOperator, ScalarField, VectorField};
use crate::gains::{
    check_small_gain, ClassCertificate, ComparisonClass, GainError, GainFn, GainKind,
    DEFAULT_WINDOW_RADIUS,
};
use crate::numeric::{
    adaptive_simpson, golden_max, golden_min, linspace, InterpError, MonotoneCubic,
    QuadratureError, QUAD_MAX_DEPTH, QUAD_TOL,
};

/// Smallest usable half-width for the construction window; the windowed
/// extrema and unit-width moving averages need room on both sides of
/// `[-1, 1]`.
pub const MIN_WINDOW_RADIUS: f64 = 2.0;
/// Default number of grid intervals for tabulated functions.
pub const DEFAULT_GRID_SIZE: usize = 4096;
/// Half-width of the exclusion zone around zero inside which the constructed
/// scaling may have a kink; derivatives there are one-sided and flagged.
pub const PHI_KINK_RADIUS: f64 = 1e-6;
/// Two branch values closer than this count as a tie when selecting the
/// Dini derivative of a min-composition.
pub const DINI_TIE_TOL: f64 = 1e-9;

/// Dense tabulation density for the windowed-extrema sweep: integer index
/// `k` maps to `r = k / DENSE_PER_UNIT`, so the window anchors at `-2`,
/// `-1`, `1` and `2` are exact grid points.
const DENSE_PER_UNIT: i64 = 2048;
/// Averaging widths below this are numerically indistinguishable from zero.
const RHO_FLOOR: f64 = 1e-14;
/// Sample count for the tabulated inverse of the first cross-gain.
const INVERSE_TABLE_LEN: usize = 65_537;
/// Abscissa tolerance for the golden-section refinement of windowed extrema.
const REFINE_XTOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(
        "small-gain condition fails: worst identity gap {min_gap:.6e} at r = {worst_r}"
    )]
    SmallGainViolated { min_gap: f64, worst_r: f64 },
    #[error("window radius {0} is below the minimum {MIN_WINDOW_RADIUS}")]
    WindowTooSmall(f64),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("averaging width invariant violated: {0}")]
    RhoInvariant(String),
    #[error("scaling function invariant violated: {0}")]
    PhiInvariant(String),
    #[error("{name} does not certify as claimed: {detail}")]
    ClassClaim { name: String, detail: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Knot grid on `[-radius, radius]` with an even interval count, so zero is
/// a knot and is pinned exactly.
fn symmetric_knots(radius: f64, grid_size: usize) -> Vec<f64> {
    let mut n = grid_size.max(16);
    if n % 2 == 1 {
        n += 1;
    }
    let mut knots = linspace(-radius, radius, n + 1);
    knots[n / 2] = 0.0;
    knots
}

/// Half the gap between the identity and the composed cross-gain, clipped to
/// `[-1/2, 1/2]`. Positive for positive `r` whenever the small-gain
/// condition holds.
fn rho0_eval(composition: &GainFn, r: f64) -> Result<f64, GainError> {
    if r == 0.0 {
        return Ok(0.0);
    }
    let raw = 0.5 * (r - composition.eval(r)?);
    Ok(if r < 0.0 { raw.max(-0.5) } else { raw.min(0.5) })
}

/// Gap samples on the integer-indexed dense grid.
struct DenseGrid {
    k_lo: i64,
    values: Vec<f64>,
}

impl DenseGrid {
    fn x(k: i64) -> f64 {
        k as f64 / DENSE_PER_UNIT as f64
    }

    fn get(&self, k: i64) -> f64 {
        self.values[(k - self.k_lo) as usize]
    }
}

/// Exact integrals of the piecewise-linear interpolant through the dense
/// samples, via cumulative trapezoid sums plus a fractional end cell.
struct PrefixIntegral {
    k_edge: i64,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PrefixIntegral {
    fn new(k_edge: i64, values: Vec<f64>) -> PrefixIntegral {
        let step = 1.0 / DENSE_PER_UNIT as f64;
        let mut cumulative = Vec::with_capacity(values.len());
        cumulative.push(0.0);
        for i in 1..values.len() {
            let add = 0.5 * (values[i - 1] + values[i]) * step;
            let prev = cumulative[i - 1];
            cumulative.push(prev + add);
        }
        PrefixIntegral {
            k_edge,
            values,
            cumulative,
        }
    }

    /// Integral of the interpolant from the left edge of the grid to `x`.
    fn antiderivative(&self, x: f64) -> f64 {
        let t = x * DENSE_PER_UNIT as f64;
        let k = (t.floor() as i64).clamp(-self.k_edge, self.k_edge - 1);
        let u = t - k as f64;
        let i = (k + self.k_edge) as usize;
        let y0 = self.values[i];
        let y1 = self.values[i + 1];
        let step = 1.0 / DENSE_PER_UNIT as f64;
        self.cumulative[i] + step * (y0 * u + 0.5 * (y1 - y0) * u * u)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        self.antiderivative(b) - self.antiderivative(a)
    }
}

/// Unit-anchored moving integral of the regularized gap: near zero the
/// window stretches to the origin, past `|r| = 1` it slides with width one.
fn moving_integral(prefix: &PrefixIntegral, r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else if r < -1.0 {
        prefix.integral(r, r + 1.0)
    } else if r < 0.0 {
        prefix.integral(r, 0.0)
    } else if r <= 1.0 {
        prefix.integral(0.0, r)
    } else {
        prefix.integral(r - 1.0, r)
    }
}

/// Continuous refinement of a discrete windowed extremum: search the two
/// dense cells around the discrete argument, clipped to the window, and keep
/// whichever of the refined and discrete values is more conservative.
fn refine_extremum(
    composition: &GainFn,
    dense: &DenseGrid,
    arg: i64,
    w_lo: i64,
    w_hi: i64,
    maximize: bool,
) -> Result<f64, GainError> {
    let discrete = dense.get(arg);
    let lo = DenseGrid::x((arg - 1).max(w_lo));
    let hi = DenseGrid::x((arg + 1).min(w_hi));
    if lo >= hi {
        return Ok(discrete);
    }
    let mut f = |x: f64| rho0_eval(composition, x);
    let refined = if maximize {
        golden_max(&mut f, lo, hi, REFINE_XTOL)?.1
    } else {
        golden_min(&mut f, lo, hi, REFINE_XTOL)?.1
    };
    Ok(if maximize {
        refined.max(discrete)
    } else {
        refined.min(discrete)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoReport {
    pub window_radius: f64,
    pub grid_points: usize,
    pub dense_per_unit: i64,
    /// Smallest distance from the tabulated width to zero over the grid.
    pub min_inner_margin: f64,
    /// Smallest distance to the raw half-gap bound over the grid.
    pub min_outer_margin: f64,
    /// Largest secant slope magnitude between adjacent knots.
    pub max_slope: f64,
    /// Knots where the magnitude cap `|r| / 2` had to be applied.
    pub rescaled_points: usize,
    pub notes: Vec<String>,
}

/// Tabulated averaging width together with the gains it was built from.
#[derive(Debug, Clone)]
pub struct RhoFn {
    table: MonotoneCubic,
    composition: GainFn,
    phi2: GainFn,
    window_radius: f64,
    report: RhoReport,
}

impl RhoFn {
    pub fn eval(&self, r: f64) -> Result<f64, InterpError> {
        if r == 0.0 {
            return Ok(0.0);
        }
        self.table.eval(r)
    }

    /// The raw clipped half-gap the width was carved from.
    pub fn rho0(&self, r: f64) -> Result<f64, GainError> {
        rho0_eval(&self.composition, r)
    }

    pub fn window_radius(&self) -> f64 {
        self.window_radius
    }

    pub fn report(&self) -> &RhoReport {
        &self.report
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        self.table.knots()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "r,rho,rho0")?;
        let (xs, ys) = self.table.knots();
        for (&r, &v) in xs.iter().zip(ys) {
            let base = self
                .rho0(r)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
            writeln!(out, "{r},{v},{base}")?;
        }
        Ok(())
    }
}

/// Build the averaging width on `[-window_radius, window_radius]`.
///
/// The construction tabulates the clipped identity gap densely, replaces it
/// by windowed extrema (a running maximum left of zero, a running minimum
/// right of it, each refined by golden-section search inside the winning
/// cells) and smooths the result with a unit-anchored moving integral. The
/// outcome is strictly between zero and the raw gap, with secant slopes
/// below one half.
pub fn build_rho(
    phi1: &GainFn,
    phi2: &GainFn,
    window_radius: f64,
    grid_size: usize,
) -> Result<RhoFn, ConstructError> {
    if !window_radius.is_finite() || window_radius < MIN_WINDOW_RADIUS {
        return Err(ConstructError::WindowTooSmall(window_radius));
    }
    for (name, g) in [("phi1", phi1), ("phi2", phi2)] {
        if !g.class().is_extended() {
            return Err(ConstructError::InvalidParameter(format!(
                "{name} must be an extended-class gain, got {}",
                g.class().name()
            )));
        }
    }
    // The dense sweep needs the gap out to one unit past the window.
    let reach = window_radius + 1.0;
    let gate = check_small_gain(phi1, phi2, reach, grid_size.max(DEFAULT_GRID_SIZE))?;
    if !gate.satisfied {
        return Err(ConstructError::SmallGainViolated {
            min_gap: gate.min_gap,
            worst_r: gate.worst_r,
        });
    }
    let composition = GainFn::compose(phi1, phi2).with_radius(reach);

    let unit = DENSE_PER_UNIT;
    let k_edge = (window_radius * unit as f64).ceil() as i64;
    let k_half = k_edge + unit;
    let mut samples = Vec::with_capacity((2 * k_half + 1) as usize);
    for k in -k_half..=k_half {
        samples.push(rho0_eval(&composition, DenseGrid::x(k))?);
    }
    let dense = DenseGrid {
        k_lo: -k_half,
        values: samples,
    };

    // Running arguments of the four windowed extrema. Each window has one
    // moving end, so a single sweep in the right direction covers all knots.
    let mut arg_a = Vec::with_capacity((2 * unit + 1) as usize);
    {
        // max over [-2, r] for r in [-2, 0]
        let mut best = -2 * unit;
        for k in (-2 * unit)..=0 {
            if dense.get(k) > dense.get(best) {
                best = k;
            }
            arg_a.push(best);
        }
    }
    let mut arg_b = vec![0i64; (k_half - unit + 1) as usize];
    {
        // max over [r, -1] for r in [-R - 1, -1]
        let mut best = -unit;
        for k in (-k_half..=-unit).rev() {
            if dense.get(k) > dense.get(best) {
                best = k;
            }
            arg_b[(k + k_half) as usize] = best;
        }
    }
    let mut arg_c = vec![0i64; (2 * unit + 1) as usize];
    {
        // min over [r, 2] for r in [0, 2]
        let mut best = 2 * unit;
        for k in (0..=2 * unit).rev() {
            if dense.get(k) < dense.get(best) {
                best = k;
            }
            arg_c[k as usize] = best;
        }
    }
    let mut arg_d = Vec::with_capacity((k_half - unit + 1) as usize);
    {
        // min over [1, r] for r in [1, R + 1]
        let mut best = unit;
        for k in unit..=k_half {
            if dense.get(k) < dense.get(best) {
                best = k;
            }
            arg_d.push(best);
        }
    }

    // Windowed-extremum regularization of the gap, dense over [-R, R].
    let mut regularized = Vec::with_capacity((2 * k_edge + 1) as usize);
    for k in -k_edge..=k_edge {
        let v = if k == 0 {
            0.0
        } else {
            let (arg, w_lo, w_hi, maximize) = if k > unit {
                (arg_d[k as usize], unit, k + unit, false)
            } else if k >= 1 {
                (arg_c[k as usize], k, 2 * unit, false)
            } else if k >= -unit {
                (arg_a[(k + 2 * unit) as usize], -2 * unit, k, true)
            } else {
                (arg_b[(k - unit + k_half) as usize], k - unit, -unit, true)
            };
            refine_extremum(&composition, &dense, arg, w_lo, w_hi, maximize)?
        };
        regularized.push(v);
    }
    let prefix = PrefixIntegral::new(k_edge, regularized);

    let knots = symmetric_knots(window_radius, grid_size);
    let mut values = Vec::with_capacity(knots.len());
    let mut rescaled = 0usize;
    for &r in &knots {
        let mut v = moving_integral(&prefix, r);
        if r != 0.0 {
            let cap = 0.5 * r.abs();
            if v.abs() > cap {
                v = v.signum() * cap;
                rescaled += 1;
            }
        }
        values.push(v);
    }

    let mut min_inner = f64::INFINITY;
    let mut min_outer = f64::INFINITY;
    for (&r, &v) in knots.iter().zip(&values) {
        if r == 0.0 {
            if v != 0.0 {
                return Err(ConstructError::RhoInvariant(format!(
                    "width must vanish at r = 0, got {v:.6e}"
                )));
            }
            continue;
        }
        let bound = rho0_eval(&composition, r)?;
        let (inner, outer) = if r < 0.0 {
            (-v, v - bound)
        } else {
            (v, bound - v)
        };
        if inner <= 0.0 || outer <= 0.0 {
            return Err(ConstructError::RhoInvariant(format!(
                "strict bounds fail at r = {r}: width {v:.6e}, gap bound {bound:.6e}"
            )));
        }
        min_inner = min_inner.min(inner);
        min_outer = min_outer.min(outer);
    }
    let mut max_slope = 0.0f64;
    for i in 1..knots.len() {
        let slope = ((values[i] - values[i - 1]) / (knots[i] - knots[i - 1])).abs();
        max_slope = max_slope.max(slope);
    }
    if max_slope >= 0.5 + 1e-6 {
        return Err(ConstructError::RhoInvariant(format!(
            "secant slope {max_slope:.8} reaches one half"
        )));
    }

    let mut notes = Vec::new();
    if rescaled > 0 {
        notes.push(format!(
            "{rescaled} knots were capped at |r| / 2 to keep the width subordinate"
        ));
    }
    let report = RhoReport {
        window_radius,
        grid_points: knots.len(),
        dense_per_unit: unit,
        min_inner_margin: min_inner,
        min_outer_margin: min_outer,
        max_slope,
        rescaled_points: rescaled,
        notes,
    };
    Ok(RhoFn {
        table: MonotoneCubic::new(knots, values)?,
        composition,
        phi2: phi2.clone(),
        window_radius,
        report,
    })
}

/// Double the probe edge until `g` covers `[-reach, reach]` in value space.
fn invert_reach(g: &GainFn, reach: f64) -> Result<f64, ConstructError> {
    let mut edge = g.radius().max(1.0);
    for _ in 0..60 {
        if g.eval(edge)? >= reach && g.eval(-edge)? <= -reach {
            return Ok(edge);
        }
        edge *= 2.0;
    }
    Err(ConstructError::InvalidParameter(format!(
        "gain does not reach +/-{reach} within the doubling budget"
    )))
}

/// Sampled inverse of a strictly increasing extended gain, for fast
/// evaluation inside quadrature. Validation elsewhere uses the exact
/// bisection inverse instead, so interpolation error cannot hide a defect.
struct InverseTable {
    table: MonotoneCubic,
}

impl InverseTable {
    fn build(gain: &GainFn, reach: f64) -> Result<InverseTable, ConstructError> {
        let edge = invert_reach(gain, reach)?;
        let mut ys = linspace(-edge, edge, INVERSE_TABLE_LEN);
        let mid = INVERSE_TABLE_LEN / 2;
        ys[mid] = 0.0;
        let mut xs = Vec::with_capacity(INVERSE_TABLE_LEN);
        for (i, &r) in ys.iter().enumerate() {
            xs.push(if i == mid { 0.0 } else { gain.eval(r)? });
        }
        let table = MonotoneCubic::new(xs, ys).map_err(|e| match e {
            InterpError::BadKnots(_) => ConstructError::InvalidParameter(
                "cross-gain is not strictly increasing on the sampled range".into(),
            ),
            other => ConstructError::Interp(other),
        })?;
        Ok(InverseTable { table })
    }

    fn eval(&self, x: f64) -> Result<f64, InterpError> {
        self.table.eval(x)
    }
}

fn quadrature_failure(e: QuadratureError<InterpError>) -> ConstructError {
    match e {
        QuadratureError::Eval(inner) => ConstructError::Interp(inner),
        QuadratureError::DepthExceeded { a, b } => ConstructError::Quadrature(format!(
            "averaging integral stalled on [{a}, {b}]"
        )),
    }
}

struct SandwichMargins {
    inverse: f64,
    cross: f64,
}

/// Check that `values` (at `knots`) stay strictly between the inverse of
/// `phi1` and `phi2`: above the inverse and below `phi2` for negative
/// arguments, mirrored for positive ones. Uses the exact bisection inverse.
fn check_phi_sandwich(
    label: &str,
    knots: &[f64],
    values: &[f64],
    phi1: &GainFn,
    phi2: &GainFn,
) -> Result<SandwichMargins, ConstructError> {
    let radius = knots.last().copied().unwrap_or(0.0);
    let edge = invert_reach(phi1, radius)?;
    let inverse = phi1.clone().with_radius(edge).invert();
    let mut min_inverse = f64::INFINITY;
    let mut min_cross = f64::INFINITY;
    for (&r, &v) in knots.iter().zip(values) {
        if r == 0.0 {
            if v != 0.0 {
                return Err(ConstructError::PhiInvariant(format!(
                    "{label} must vanish at r = 0, got {v:.6e}"
                )));
            }
            continue;
        }
        let inv_v = inverse.eval(r)?;
        let cross_v = phi2.eval(r)?;
        let (m_inv, m_cross) = if r < 0.0 {
            (v - inv_v, cross_v - v)
        } else {
            (inv_v - v, v - cross_v)
        };
        if m_inv <= 0.0 || m_cross <= 0.0 {
            return Err(ConstructError::PhiInvariant(format!(
                "{label} leaves the strict envelope at r = {r}: \
                 inverse margin {m_inv:.6e}, cross margin {m_cross:.6e}"
            )));
        }
        min_inverse = min_inverse.min(m_inv);
        min_cross = min_cross.min(m_cross);
    }
    Ok(SandwichMargins {
        inverse: min_inverse,
        cross: min_cross,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiReport {
    pub window_radius: f64,
    pub grid_points: usize,
    /// Smallest strict margin to the inverse of the first cross-gain.
    pub min_inverse_margin: f64,
    /// Smallest strict margin to the second cross-gain.
    pub min_cross_margin: f64,
    /// Smallest secant slope between knots outside the kink exclusion zone.
    pub min_slope: f64,
    pub notes: Vec<String>,
}

/// Constructed scaling function: the moving average of the inverse first
/// cross-gain over the averaging width.
#[derive(Debug, Clone)]
pub struct PhiFn {
    table: Arc<MonotoneCubic>,
    window_radius: f64,
    report: PhiReport,
}

impl PhiFn {
    pub fn eval(&self, r: f64) -> Result<f64, InterpError> {
        if r == 0.0 {
            return Ok(0.0);
        }
        self.table.eval(r)
    }

    /// Derivative estimate. The flag is set inside the kink exclusion zone,
    /// where only the one-sided value is meaningful.
    pub fn deriv(&self, r: f64) -> Result<(f64, bool), InterpError> {
        if r.abs() <= PHI_KINK_RADIUS {
            let side = if r < 0.0 { -1.0 } else { 1.0 };
            Ok((self.table.deriv_one_sided(r, side)?, true))
        } else {
            Ok((self.table.deriv(r)?, false))
        }
    }

    /// View the scaling as a tabulated gain for composition and certification.
    pub fn as_gain(&self) -> GainFn {
        GainFn::from_table((*self.table).clone(), ComparisonClass::ExtendedKInfty)
            .expect("scaling table covers a symmetric window")
    }

    pub fn window_radius(&self) -> f64 {
        self.window_radius
    }

    pub fn report(&self) -> &PhiReport {
        &self.report
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        self.table.knots()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "r,phi")?;
        let (xs, ys) = self.table.knots();
        for (&r, &v) in xs.iter().zip(ys) {
            writeln!(out, "{r},{v}")?;
        }
        Ok(())
    }
}

/// Build the scaling function from an averaging width.
///
/// At each knot `r != 0` the value is the average of the inverse first
/// cross-gain over `[r - rho(r), r]`, computed by adaptive quadrature over a
/// finely sampled inverse. The result must be strictly increasing, vanish at
/// zero and stay strictly inside the envelope formed by the exact inverse of
/// `phi1` and by `phi2`; any violation is an error, not a warning.
pub fn build_phi(
    rho: &RhoFn,
    phi1: &GainFn,
    grid_size: usize,
) -> Result<PhiFn, ConstructError> {
    if !phi1.class().is_extended() || !phi1.class().is_unbounded() {
        return Err(ConstructError::InvalidParameter(format!(
            "scaling construction needs an extended-Kinf first cross-gain, got {}",
            phi1.class().name()
        )));
    }
    let radius = rho.window_radius();
    // Averaging windows stay within half a unit of the window edge.
    let inverse = InverseTable::build(phi1, radius + 0.6)?;
    let knots = symmetric_knots(radius, grid_size);
    let mut values = Vec::with_capacity(knots.len());
    for &r in &knots {
        if r == 0.0 {
            values.push(0.0);
            continue;
        }
        let width = rho.eval(r)?;
        if width.abs() < RHO_FLOOR {
            return Err(ConstructError::PhiInvariant(format!(
                "averaging width {width:.3e} at r = {r} is too close to zero"
            )));
        }
        let mut f = |s: f64| inverse.eval(s);
        let integral = adaptive_simpson(&mut f, r - width, r, QUAD_TOL, QUAD_MAX_DEPTH)
            .map_err(quadrature_failure)?;
        values.push(integral / width);
    }

    for i in 1..values.len() {
        if values[i] <= values[i - 1] {
            return Err(ConstructError::PhiInvariant(format!(
                "values are not strictly increasing near r = {}",
                knots[i]
            )));
        }
    }
    let margins = check_phi_sandwich("constructed scaling", &knots, &values, phi1, &rho.phi2)?;
    let mut min_slope = f64::INFINITY;
    for i in 1..knots.len() {
        if knots[i] >= -PHI_KINK_RADIUS && knots[i - 1] <= PHI_KINK_RADIUS {
            continue;
        }
        min_slope = min_slope.min((values[i] - values[i - 1]) / (knots[i] - knots[i - 1]));
    }

    let report = PhiReport {
        window_radius: radius,
        grid_points: knots.len(),
        min_inverse_margin: margins.inverse,
        min_cross_margin: margins.cross,
        min_slope,
        notes: Vec::new(),
    };
    Ok(PhiFn {
        table: Arc::new(MonotoneCubic::new(knots, values)?),
        window_radius: radius,
        report,
    })
}

/// The scaling to use when composing two barriers: either the constructed
/// averaging scaling or a user-supplied closed form, which is validated
/// against the same strict envelope before being accepted.
#[derive(Debug, Clone)]
pub enum PhiSpec {
    Constructed(PhiFn),
    Override(GainFn),
}

/// Derivative strategy for an override scaling.
#[derive(Debug, Clone)]
enum OverrideDeriv {
    Symbolic(ScalarExpr),
    Table(Arc<MonotoneCubic>),
    Central,
}

#[derive(Debug, Clone)]
enum PhiRepr {
    Constructed(PhiFn),
    Override { gain: GainFn, deriv: OverrideDeriv },
}

fn override_deriv(gain: &GainFn) -> OverrideDeriv {
    match gain.kind() {
        GainKind::Expr(e) => match e.differentiate("r") {
            Ok(d) => OverrideDeriv::Symbolic(d),
            Err(_) => OverrideDeriv::Central,
        },
        GainKind::Table(t) => OverrideDeriv::Table(Arc::clone(t)),
        _ => OverrideDeriv::Central,
    }
}

#[derive(Debug, Clone)]
pub struct ComposeOptions {
    /// Half-width of the validation window for override scalings and of the
    /// decay-rate tabulation.
    pub window_radius: f64,
    /// Grid intervals for validation, tabulation, and certification.
    pub grid_size: usize,
}

impl Default for ComposeOptions {
    fn default() -> ComposeOptions {
        ComposeOptions {
            window_radius: DEFAULT_WINDOW_RADIUS,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

/// Values of both branches of the composed barrier at one state.
#[derive(Debug, Clone, Serialize)]
pub struct BranchValues {
    /// `min{ phi(h1), h2 }`.
    pub h: f64,
    pub phi_h1: f64,
    pub h1: f64,
    pub h2: f64,
    pub nonsmooth: bool,
}

/// Which branch of the min drives the Dini derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ActiveBranch {
    First,
    Second,
    Tie,
}

/// Lower Dini derivative of the composed barrier at one point.
#[derive(Debug, Clone, Serialize)]
pub struct DiniEval {
    pub value: f64,
    pub branch: ActiveBranch,
    /// `min{ phi(h1), h2 }` at the point.
    pub h: f64,
    pub phi_h1: f64,
    pub h2: f64,
    /// Set when the scaling derivative came from inside the kink exclusion
    /// zone or was itself flagged as nonsmooth.
    pub phi_kink: bool,
    /// Set when any expression evaluation passed near a kink of its own.
    pub nonsmooth: bool,
}

/// Select the lower Dini derivative of `min{ v1, v2 }` given the one-sided
/// derivatives `d1`, `d2` of the branches. Ties within [`DINI_TIE_TOL`]
/// take the worst case.
pub fn dini_min(v1: f64, v2: f64, d1: f64, d2: f64) -> f64 {
    let gap = v1 - v2;
    if gap.abs() <= DINI_TIE_TOL {
        d1.min(d2)
    } else if gap < 0.0 {
        d1
    } else {
        d2
    }
}

/// A composed barrier `h = min{ phi(h1), h2 }` with its input gain and
/// decay rate.
#[derive(Debug, Clone)]
pub struct ComposedBarrier {
    h1: ScalarField,
    h2: ScalarField,
    phi: PhiRepr,
    gamma: GainFn,
    alpha: GainFn,
    gamma_cert: ClassCertificate,
    alpha_cert: ClassCertificate,
    window_radius: f64,
    notes: Vec<String>,
}

impl ComposedBarrier {
    pub fn h1(&self) -> &ScalarField {
        &self.h1
    }

    pub fn h2(&self) -> &ScalarField {
        &self.h2
    }

    /// Combined input gain `r -> -phi(-gamma1(r)) + gamma2(r)`.
    pub fn gamma(&self) -> &GainFn {
        &self.gamma
    }

    /// Combined decay rate `r -> max{ phi'(r) alpha1(r), alpha2(r) }`.
    pub fn alpha(&self) -> &GainFn {
        &self.alpha
    }

    pub fn gamma_cert(&self) -> &ClassCertificate {
        &self.gamma_cert
    }

    pub fn alpha_cert(&self) -> &ClassCertificate {
        &self.alpha_cert
    }

    pub fn window_radius(&self) -> f64 {
        self.window_radius
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn is_override(&self) -> bool {
        matches!(self.phi, PhiRepr::Override { .. })
    }

    /// Construction report of the scaling, when it was constructed here.
    pub fn phi_report(&self) -> Option<&PhiReport> {
        match &self.phi {
            PhiRepr::Constructed(p) => Some(p.report()),
            PhiRepr::Override { .. } => None,
        }
    }

    pub fn phi_description(&self) -> String {
        match &self.phi {
            PhiRepr::Constructed(p) => format!(
                "averaged inverse cross-gain on [-{0}, {0}]",
                p.window_radius()
            ),
            PhiRepr::Override { gain, .. } => gain.describe(),
        }
    }

    pub fn phi_eval(&self, r: f64) -> Result<f64, ConstructError> {
        match &self.phi {
            PhiRepr::Constructed(p) => Ok(p.eval(r)?),
            PhiRepr::Override { gain, .. } => Ok(gain.eval(r)?),
        }
    }

    /// Scaling derivative; the flag marks one-sided or kink-adjacent values.
    pub fn phi_deriv(&self, r: f64) -> Result<(f64, bool), ConstructError> {
        match &self.phi {
            PhiRepr::Constructed(p) => Ok(p.deriv(r)?),
            PhiRepr::Override { gain, deriv } => match deriv {
                OverrideDeriv::Symbolic(d) => {
                    let e = d.eval(&[r])?;
                    Ok((e.value, e.nonsmooth))
                }
                OverrideDeriv::Table(t) => Ok((t.deriv(r)?, false)),
                OverrideDeriv::Central => {
                    let step = 1e-6 * (1.0 + r.abs());
                    let hi = gain.eval(r + step)?;
                    let lo = gain.eval(r - step)?;
                    Ok(((hi - lo) / (2.0 * step), false))
                }
            },
        }
    }

    /// Evaluate both branches. The slices must be ordered like each
    /// barrier's own variable list.
    pub fn value_split(&self, x1: &[f64], x2: &[f64]) -> Result<BranchValues, ConstructError> {
        let v1 = self.h1.value(x1)?;
        let v2 = self.h2.value(x2)?;
        let phi_h1 = self.phi_eval(v1.value)?;
        Ok(BranchValues {
            h: phi_h1.min(v2.value),
            phi_h1,
            h1: v1.value,
            h2: v2.value,
            nonsmooth: v1.nonsmooth || v2.nonsmooth,
        })
    }

    /// Human-readable description of the certified safe set.
    pub fn set_description(&self) -> String {
        let h1 = self.h1.expr().pretty();
        let h2 = self.h2.expr().pretty();
        let first = match &self.phi {
            PhiRepr::Override { gain, .. } if gain.describe() == "r" => h1,
            _ => format!("phi({h1})"),
        };
        format!(
            "{{ x : min{{ {first}, {h2} }} + gamma(|u|) >= 0 }} with gamma(r) = {}",
            self.gamma.describe()
        )
    }
}

/// Merge two barrier certificates into a composed one.
///
/// The scaling is validated against the strict envelope between the inverse
/// of `phi1` and `phi2` (constructed scalings were already validated at
/// build time). The combined input gain is `-phi(-gamma1(r)) + gamma2(r)`,
/// window-capped where a tabulated scaling runs out of reach, and the
/// combined decay rate is the pointwise max of `phi' * alpha1` and `alpha2`,
/// tabulated over the window. Class certificates for both are recorded; a
/// failed certificate is an error for the input gain unless both input
/// gains are zero, and a note for the decay rate.
pub fn compose_barrier(
    h1: &ScalarField,
    h2: &ScalarField,
    phi: PhiSpec,
    phi1: &GainFn,
    phi2: &GainFn,
    gamma1: &GainFn,
    gamma2: &GainFn,
    alpha1: &GainFn,
    alpha2: &GainFn,
    options: &ComposeOptions,
) -> Result<ComposedBarrier, ConstructError> {
    let mut notes = Vec::new();
    for (name, g) in [("alpha1", alpha1), ("alpha2", alpha2)] {
        if !g.class().is_extended() {
            return Err(ConstructError::InvalidParameter(format!(
                "{name} must be an extended-class decay rate, got {}",
                g.class().name()
            )));
        }
    }

    let (repr, radius) = match phi {
        PhiSpec::Constructed(p) => {
            let radius = p.window_radius();
            (PhiRepr::Constructed(p), radius)
        }
        PhiSpec::Override(gain) => {
            if !gain.class().is_extended() {
                return Err(ConstructError::InvalidParameter(format!(
                    "scaling override must be an extended-class gain, got {}",
                    gain.class().name()
                )));
            }
            let radius = options.window_radius;
            if !radius.is_finite() || radius < MIN_WINDOW_RADIUS {
                return Err(ConstructError::WindowTooSmall(radius));
            }
            let knots = symmetric_knots(radius, options.grid_size);
            let values: Vec<f64> = knots
                .iter()
                .map(|&r| gain.eval(r))
                .collect::<Result<_, _>>()?;
            let margins = check_phi_sandwich("scaling override", &knots, &values, phi1, phi2)?;
            notes.push(format!(
                "scaling override accepted: inverse margin {:.3e}, cross margin {:.3e}",
                margins.inverse, margins.cross
            ));
            notes.push("averaging construction skipped in favor of the supplied scaling".into());
            let deriv = override_deriv(&gain);
            (PhiRepr::Override { gain, deriv }, radius)
        }
    };

    let phi_gain = match &repr {
        PhiRepr::Constructed(p) => p.as_gain(),
        PhiRepr::Override { gain, .. } => gain.clone(),
    };
    // First subsystem's input gain pushed through the scaling:
    // r -> -phi(-gamma1(r)).
    let mut gamma_hat1 = GainFn::compose(&phi_gain.reflect()?, gamma1);
    let table_reach = match phi_gain.kind() {
        GainKind::Expr(_) => None,
        _ => Some(phi_gain.radius()),
    };
    if let Some(reach) = table_reach {
        if !gamma_hat1.is_zero() && gamma1.eval(gamma_hat1.radius())? > reach {
            let capped = gamma1.invert().eval(reach)?;
            gamma_hat1 = gamma_hat1.with_radius(capped);
            notes.push(format!(
                "input gain window capped at {capped:.6} where the scaling table reaches its edge"
            ));
        }
    }
    let gamma = GainFn::sum(&gamma_hat1, gamma2);
    let gamma_cert = gamma.certify_class_with(options.grid_size);
    if gamma.is_zero() {
        notes.push(
            "both subsystems have zero input gain; the composed input gain is identically zero"
                .into(),
        );
    } else {
        if !gamma_cert.holds {
            return Err(ConstructError::ClassClaim {
                name: "composed input gain".into(),
                detail: format!(
                    "class {} on [0, {}]",
                    gamma.class().name(),
                    gamma.radius()
                ),
            });
        }
        if !gamma.class().is_unbounded() {
            notes.push(format!(
                "composed input gain certifies as class {} only; unbounded growth was not claimed",
                gamma.class().name()
            ));
        }
    }

    let knots = symmetric_knots(radius, options.grid_size);
    let mut alpha_values = Vec::with_capacity(knots.len());
    for &r in &knots {
        if r == 0.0 {
            alpha_values.push(0.0);
            continue;
        }
        let (slope, _) = phi_deriv_repr(&repr, r)?;
        let a1 = alpha1.eval(r)?;
        let a2 = alpha2.eval(r)?;
        alpha_values.push((slope * a1).max(a2));
    }
    let alpha_table = MonotoneCubic::new(knots, alpha_values).map_err(|e| match e {
        InterpError::BadKnots(_) | InterpError::BadValue(_) => ConstructError::ClassClaim {
            name: "composed decay rate".into(),
            detail: format!("tabulation failed: {e}"),
        },
        other => ConstructError::Interp(other),
    })?;
    let alpha = GainFn::from_table(alpha_table, ComparisonClass::ExtendedK)?;
    let alpha_cert = alpha.certify_class_with(options.grid_size);
    if !alpha_cert.holds {
        notes.push(
            "composed decay rate did not certify as extended-K; see its certificate".into(),
        );
    }

    Ok(ComposedBarrier {
        h1: h1.clone(),
        h2: h2.clone(),
        phi: repr,
        gamma,
        alpha,
        gamma_cert,
        alpha_cert,
        window_radius: radius,
        notes,
    })
}

fn phi_deriv_repr(repr: &PhiRepr, r: f64) -> Result<(f64, bool), ConstructError> {
    match repr {
        PhiRepr::Constructed(p) => Ok(p.deriv(r)?),
        PhiRepr::Override { gain, deriv } => match deriv {
            OverrideDeriv::Symbolic(d) => {
                let e = d.eval(&[r])?;
                Ok((e.value, e.nonsmooth))
            }
            OverrideDeriv::Table(t) => Ok((t.deriv(r)?, false)),
            OverrideDeriv::Central => {
                let step = 1e-6 * (1.0 + r.abs());
                let hi = gain.eval(r + step)?;
                let lo = gain.eval(r - step)?;
                Ok(((hi - lo) / (2.0 * step), false))
            }
        },
    }
}

/// Reusable evaluator for the lower Dini derivative of a composed barrier
/// along a vector field.
pub struct ComposedDini<'a> {
    barrier: &'a ComposedBarrier,
    field: &'a VectorField,
    lie1: LieOperator,
    lie2: LieOperator,
    h1_slots: Vec<usize>,
    h2_slots: Vec<usize>,
    args1: Vec<f64>,
    args2: Vec<f64>,
    scratch: Vec<f64>,
}

/// Coordinate of each barrier variable inside the field's point layout.
fn barrier_slots(h: &ScalarField, f: &VectorField) -> Result<Vec<usize>, ConstructError> {
    h.vars()
        .iter()
        .map(|v| {
            f.vars().iter().position(|name| name == v).ok_or_else(|| {
                ConstructError::InvalidParameter(format!(
                    "barrier variable {v} is not a variable of the field"
                ))
            })
        })
        .collect()
}

impl<'a> ComposedDini<'a> {
    pub fn new(
        barrier: &'a ComposedBarrier,
        field: &'a VectorField,
    ) -> Result<ComposedDini<'a>, ConstructError> {
        let lie1 = LieOperator::new(barrier.h1(), field)?;
        let lie2 = LieOperator::new(barrier.h2(), field)?;
        let h1_slots = barrier_slots(barrier.h1(), field)?;
        let h2_slots = barrier_slots(barrier.h2(), field)?;
        Ok(ComposedDini {
            barrier,
            field,
            lie1,
            lie2,
            h1_slots,
            h2_slots,
            args1: Vec::new(),
            args2: Vec::new(),
            scratch: Vec::new(),
        })
    }

    /// Evaluate at a full point ordered `x1 ++ x2 ++ u`.
    pub fn eval(&mut self, point: &[f64]) -> Result<DiniEval, ConstructError> {
        let expect = self.field.vars().len();
        if point.len() != expect {
            return Err(ConstructError::InvalidParameter(format!(
                "point has {} coordinates, the field needs {expect}",
                point.len()
            )));
        }
        self.args1.clear();
        self.args1.extend(self.h1_slots.iter().map(|&s| point[s]));
        self.args2.clear();
        self.args2.extend(self.h2_slots.iter().map(|&s| point[s]));
        let v1 = self.barrier.h1().value(&self.args1)?;
        let v2 = self.barrier.h2().value(&self.args2)?;
        let phi_h1 = self.barrier.phi_eval(v1.value)?;
        let (slope, kinked) = self.barrier.phi_deriv(v1.value)?;
        let l1 = self
            .lie1
            .eval(self.barrier.h1(), self.field, point, &mut self.scratch)?;
        let l2 = self
            .lie2
            .eval(self.barrier.h2(), self.field, point, &mut self.scratch)?;
        let d1 = slope * l1.value;
        let d2 = l2.value;
        let gap = phi_h1 - v2.value;
        let (value, branch) = if gap.abs() <= DINI_TIE_TOL {
            (d1.min(d2), ActiveBranch::Tie)
        } else if gap < 0.0 {
            (d1, ActiveBranch::First)
        } else {
            (d2, ActiveBranch::Second)
        };
        Ok(DiniEval {
            value,
            branch,
            h: phi_h1.min(v2.value),
            phi_h1,
            h2: v2.value,
            phi_kink: kinked,
            nonsmooth: v1.nonsmooth || v2.nonsmooth || l1.nonsmooth || l2.nonsmooth,
        })
    }
}

/// One-shot Dini evaluation at a named point.
pub fn composed_dini(
    barrier: &ComposedBarrier,
    field: &VectorField,
    point: &HashMap<String, f64>,
) -> Result<DiniEval, ConstructError> {
    let mut flat = Vec::with_capacity(field.vars().len());
    for name in field.vars() {
        match point.get(name) {
            Some(v) => flat.push(*v),
            None => {
                return Err(ConstructError::Eval(EvalError::UnboundVariable {
                    name: name.clone(),
                }))
            }
        }
    }
    ComposedDini::new(barrier, field)?.eval(&flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gain(source: &str, class: ComparisonClass) -> GainFn {
        GainFn::from_expr(source, class, DEFAULT_WINDOW_RADIUS).unwrap()
    }

    fn linear_pair() -> (GainFn, GainFn) {
        (
            gain("0.96 * r", ComparisonClass::ExtendedKInfty),
            gain("0.64 * r", ComparisonClass::ExtendedKInfty),
        )
    }

    fn example_field() -> VectorField {
        VectorField::parse(
            &[
                "-x1 - 0.24 * x2 * sin(x1 - x2) - 0.5 * u1^3",
                "-x2 - 0.16 * x1 * sin(x2 - x1) - 0.5 * u2",
            ],
            &["x1", "x2"],
            &["x1"],
            &["x2"],
            &["u1", "u2"],
        )
        .unwrap()
    }

    fn example_composed(phi: PhiSpec) -> ComposedBarrier {
        let (phi1, phi2) = linear_pair();
        let h1 = ScalarField::parse("x1", &["x1"]).unwrap();
        let h2 = ScalarField::parse("x2", &["x2"]).unwrap();
        let gamma1 = gain("2 * r^3", ComparisonClass::KInfty);
        let gamma2 = gain("2 * r", ComparisonClass::KInfty);
        let alpha1 = gain("0.5 * r", ComparisonClass::ExtendedK);
        let alpha2 = gain("0.5 * r", ComparisonClass::ExtendedK);
        compose_barrier(
            &h1,
            &h2,
            phi,
            &phi1,
            &phi2,
            &gamma1,
            &gamma2,
            &alpha1,
            &alpha2,
            &ComposeOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn averaging_width_matches_linear_pair_profile() {
        let (phi1, phi2) = linear_pair();
        // Composed gain 0.6144 r gives gap profile 0.1928 r and width
        // 0.0964 r^2 on [0, 1]; the grid spacing makes 0.5 a knot.
        let rho = build_rho(&phi1, &phi2, 2.0, 256).unwrap();
        assert_eq!(rho.eval(0.0).unwrap(), 0.0);
        assert!((rho.eval(0.5).unwrap() - 0.0241).abs() < 1e-9);
        assert!((rho.eval(-0.5).unwrap() + 0.0241).abs() < 1e-9);
        assert!((rho.eval(1.0).unwrap() - 0.0964).abs() < 1e-9);
        // Past r = 1 the window slides: 0.1928 ((1 - (r-1)^2)/2 + r - 1).
        let expect = 0.1928 * ((1.0 - 0.25) / 2.0 + 0.5);
        assert!((rho.eval(1.5).unwrap() - expect).abs() < 1e-9);
        let report = rho.report();
        assert!(report.min_inner_margin > 0.0);
        assert!(report.min_outer_margin > 0.0);
        assert!(report.max_slope < 0.5);
        assert_eq!(report.rescaled_points, 0);
    }

    #[test]
    fn window_radius_guard_rejects_small_windows() {
        let (phi1, phi2) = linear_pair();
        assert!(matches!(
            build_rho(&phi1, &phi2, 1.5, 64),
            Err(ConstructError::WindowTooSmall(_))
        ));
    }

    #[test]
    fn small_gain_violation_blocks_construction() {
        let id1 = GainFn::identity(DEFAULT_WINDOW_RADIUS);
        let id2 = GainFn::identity(DEFAULT_WINDOW_RADIUS);
        assert!(matches!(
            build_rho(&id1, &id2, 4.0, 64),
            Err(ConstructError::SmallGainViolated { .. })
        ));
    }

    #[test]
    fn raw_gap_clips_at_half_unit() {
        let g1 = gain("0.1 * r", ComparisonClass::ExtendedKInfty);
        let g2 = gain("0.1 * r", ComparisonClass::ExtendedKInfty);
        let rho = build_rho(&g1, &g2, 2.0, 64).unwrap();
        assert_eq!(rho.rho0(2.0).unwrap(), 0.5);
        assert_eq!(rho.rho0(-2.0).unwrap(), -0.5);
        // The averaged width stays strictly below the clip.
        assert!(rho.eval(2.0).unwrap() < 0.5);
    }

    #[test]
    fn scaling_matches_linear_closed_form() {
        let (phi1, phi2) = linear_pair();
        let rho = build_rho(&phi1, &phi2, 2.0, 256).unwrap();
        let phi = build_phi(&rho, &phi1, 256).unwrap();
        // Averaging the linear inverse r / 0.96 gives (r - rho(r)/2) / 0.96.
        let (knots, values) = phi.knots();
        for (&r, &v) in knots.iter().zip(values) {
            let expect = if r == 0.0 {
                0.0
            } else {
                (r - rho.eval(r).unwrap() / 2.0) / 0.96
            };
            assert!(
                (v - expect).abs() < 1e-8,
                "closed form mismatch at r = {r}: {v} vs {expect}"
            );
        }
        assert!((phi.eval(-0.5).unwrap() + 0.50828125).abs() < 1e-8);
        let report = phi.report();
        assert!(report.min_inverse_margin > 0.0);
        assert!(report.min_cross_margin > 0.0);
        assert!(report.min_slope > 0.0);
        let (d0, kinked) = phi.deriv(0.0).unwrap();
        assert!(kinked);
        assert!(d0 > 0.0);
        let (d, smooth_flag) = phi.deriv(0.7).unwrap();
        assert!(!smooth_flag);
        assert!(d > 0.0);
    }

    #[test]
    fn scaling_requires_unbounded_cross_gain() {
        let (phi1, phi2) = linear_pair();
        let rho = build_rho(&phi1, &phi2, 2.0, 64).unwrap();
        let bounded = gain("0.96 * r", ComparisonClass::ExtendedK);
        assert!(matches!(
            build_phi(&rho, &bounded, 64),
            Err(ConstructError::InvalidParameter(_))
        ));
    }

    #[test]
    fn construction_is_deterministic() {
        let (phi1, phi2) = linear_pair();
        let a = build_rho(&phi1, &phi2, 2.0, 64).unwrap();
        let b = build_rho(&phi1, &phi2, 2.0, 64).unwrap();
        let (_, ya) = a.knots();
        let (_, yb) = b.knots();
        for (va, vb) in ya.iter().zip(yb) {
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn identity_override_composition_matches_hand_values() {
        let cb = example_composed(PhiSpec::Override(GainFn::identity(
            DEFAULT_WINDOW_RADIUS,
        )));
        let gamma = cb.gamma();
        assert_eq!(gamma.describe(), "2.0 * r ^ 3.0 + 2.0 * r");
        assert_eq!(gamma.eval(0.0).unwrap(), 0.0);
        assert!((gamma.eval(1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!((gamma.eval(0.5).unwrap() - 1.25).abs() < 1e-12);
        assert!(cb.gamma_cert().holds);
        assert!((cb.alpha().eval(2.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((cb.alpha().eval(-3.0).unwrap() + 1.5).abs() < 1e-9);
        assert!(cb.alpha_cert().holds);
        let split = cb.value_split(&[-1.0], &[2.0]).unwrap();
        assert_eq!(split.h, -1.0);
        assert_eq!(split.phi_h1, -1.0);
        assert_eq!(split.h2, 2.0);
        let description = cb.set_description();
        assert!(description.contains("min{ x1, x2 }"), "{description}");
        assert!(description.contains("2.0 * r ^ 3.0 + 2.0 * r"));
        assert!(cb.notes().iter().any(|n| n.contains("skipped")));
    }

    #[test]
    fn override_outside_envelope_is_rejected() {
        let (phi1, phi2) = linear_pair();
        let h1 = ScalarField::parse("x1", &["x1"]).unwrap();
        let h2 = ScalarField::parse("x2", &["x2"]).unwrap();
        let alpha = gain("0.5 * r", ComparisonClass::ExtendedK);
        let gamma1 = gain("2 * r^3", ComparisonClass::KInfty);
        let gamma2 = gain("2 * r", ComparisonClass::KInfty);
        let too_steep = gain("2 * r", ComparisonClass::ExtendedKInfty);
        let err = compose_barrier(
            &h1,
            &h2,
            PhiSpec::Override(too_steep),
            &phi1,
            &phi2,
            &gamma1,
            &gamma2,
            &alpha,
            &alpha,
            &ComposeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ConstructError::PhiInvariant(_)), "{err}");
    }

    #[test]
    fn zero_input_gains_compose_with_note() {
        let (phi1, phi2) = linear_pair();
        let h1 = ScalarField::parse("x1", &["x1"]).unwrap();
        let h2 = ScalarField::parse("x2", &["x2"]).unwrap();
        let alpha = gain("0.5 * r", ComparisonClass::ExtendedK);
        let zero1 = GainFn::zero(DEFAULT_WINDOW_RADIUS);
        let zero2 = GainFn::zero(DEFAULT_WINDOW_RADIUS);
        let cb = compose_barrier(
            &h1,
            &h2,
            PhiSpec::Override(GainFn::identity(DEFAULT_WINDOW_RADIUS)),
            &phi1,
            &phi2,
            &zero1,
            &zero2,
            &alpha,
            &alpha,
            &ComposeOptions::default(),
        )
        .unwrap();
        assert!(cb.gamma().is_zero());
        assert_eq!(cb.gamma().eval(0.7).unwrap(), 0.0);
        assert!(!cb.gamma_cert().holds);
        assert!(cb.notes().iter().any(|n| n.contains("zero input gain")));
    }

    #[test]
    fn plain_decay_rates_are_rejected() {
        let (phi1, phi2) = linear_pair();
        let h1 = ScalarField::parse("x1", &["x1"]).unwrap();
        let h2 = ScalarField::parse("x2", &["x2"]).unwrap();
        let plain = gain("0.5 * r", ComparisonClass::K);
        let ext = gain("0.5 * r", ComparisonClass::ExtendedK);
        let gamma1 = gain("2 * r^3", ComparisonClass::KInfty);
        let gamma2 = gain("2 * r", ComparisonClass::KInfty);
        let err = compose_barrier(
            &h1,
            &h2,
            PhiSpec::Override(GainFn::identity(DEFAULT_WINDOW_RADIUS)),
            &phi1,
            &phi2,
            &gamma1,
            &gamma2,
            &plain,
            &ext,
            &ComposeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ConstructError::InvalidParameter(_)), "{err}");
    }

    #[test]
    fn constructed_scaling_caps_input_gain_window() {
        let (phi1, phi2) = linear_pair();
        let rho = build_rho(&phi1, &phi2, DEFAULT_WINDOW_RADIUS, 512).unwrap();
        let phi = build_phi(&rho, &phi1, 512).unwrap();
        let h1 = ScalarField::parse("x1", &["x1"]).unwrap();
        let h2 = ScalarField::parse("x2", &["x2"]).unwrap();
        let gamma1 = gain("2 * r^3", ComparisonClass::KInfty);
        let gamma2 = gain("2 * r", ComparisonClass::KInfty);
        let alpha = gain("0.5 * r", ComparisonClass::ExtendedK);
        let cb = compose_barrier(
            &h1,
            &h2,
            PhiSpec::Constructed(phi),
            &phi1,
            &phi2,
            &gamma1,
            &gamma2,
            &alpha,
            &alpha,
            &ComposeOptions {
                window_radius: DEFAULT_WINDOW_RADIUS,
                grid_size: 512,
            },
        )
        .unwrap();
        // The scaling table reaches 10, so the first input gain window stops
        // where 2 r^3 = 10.
        let expect = 5.0f64.powf(1.0 / 3.0);
        assert!((cb.gamma().radius() - expect).abs() < 1e-6);
        assert!(cb.notes().iter().any(|n| n.contains("capped")));
        assert!(cb.gamma_cert().holds);
        // gamma(1) = -phi(-2) + 2 sits inside the envelope around 2/0.96 + 2.
        let g1 = cb.gamma().eval(1.0).unwrap();
        assert!(g1 > 3.28 && g1 < 4.0834, "gamma(1) = {g1}");
        assert!(!cb.is_override());
        assert!(cb.phi_report().is_some());
    }

    #[test]
    fn dini_select_matches_branch_rules() {
        assert_eq!(dini_min(2.0, 3.0, -1.0, 5.0), -1.0);
        assert_eq!(dini_min(1.0, 1.0, -1.0, 5.0), -1.0);
        assert_eq!(dini_min(3.0, 2.0, -1.0, 5.0), 5.0);
    }

    #[test]
    fn composed_dini_matches_hand_computation() {
        let cb = example_composed(PhiSpec::Override(GainFn::identity(
            DEFAULT_WINDOW_RADIUS,
        )));
        let field = example_field();
        let mut dini = ComposedDini::new(&cb, &field).unwrap();
        // At (-1, -2, 0, 0) the second branch is active and
        // d2 = 2 - 0.16 sin(1).
        let eval = dini.eval(&[-1.0, -2.0, 0.0, 0.0]).unwrap();
        assert_eq!(eval.branch, ActiveBranch::Second);
        assert_eq!(eval.h, -2.0);
        assert!((eval.value - 1.865_364_642_430_736_6).abs() < 1e-12);
        assert!(!eval.phi_kink);

        // Equal branches tie and both give 1.
        let mut point = HashMap::new();
        point.insert("x1".to_string(), -1.0);
        point.insert("x2".to_string(), -1.0);
        point.insert("u1".to_string(), 0.0);
        point.insert("u2".to_string(), 0.0);
        let tie = composed_dini(&cb, &field, &point).unwrap();
        assert_eq!(tie.branch, ActiveBranch::Tie);
        assert!((tie.value - 1.0).abs() < 1e-12);
    }
}
