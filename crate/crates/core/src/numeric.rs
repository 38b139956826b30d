//! Shared numeric kernels: adaptive Simpson quadrature, bisection for
//! monotone inverses, golden-section refinement, and monotone cubic
//! (Fritsch-Carlson) interpolation for tabulated functions.

use std::fmt;
use thiserror::Error;

/// Default absolute quadrature tolerance per requested interval.
pub const QUAD_TOL: f64 = 1e-10;
/// Default recursion limit for adaptive quadrature.
pub const QUAD_MAX_DEPTH: u32 = 48;
/// Iteration cap for bisection.
pub const BISECT_MAX_ITER: u32 = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum QuadratureError<E> {
    Eval(E),
    /// Subdivision hit the depth limit before meeting the tolerance.
    DepthExceeded { a: f64, b: f64 },
}

impl<E: fmt::Display> fmt::Display for QuadratureError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadratureError::Eval(e) => write!(f, "integrand evaluation failed: {e}"),
            QuadratureError::DepthExceeded { a, b } => write!(
                f,
                "adaptive quadrature did not converge on [{a}, {b}]"
            ),
        }
    }
}

impl<E: fmt::Display + fmt::Debug> std::error::Error for QuadratureError<E> {}

/// Adaptive Simpson integration of `f` over `[a, b]` (signed if `a > b`)
/// to absolute tolerance `tol`.
pub fn adaptive_simpson<E>(
    f: &mut impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64, QuadratureError<E>> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return adaptive_simpson(f, b, a, tol, max_depth).map(|v| -v);
    }
    let mut eval = |x: f64| f(x).map_err(QuadratureError::Eval);
    let fa = eval(a)?;
    let m = 0.5 * (a + b);
    let fm = eval(m)?;
    let fb = eval(b)?;
    let whole = simpson(a, b, fa, fm, fb);
    simpson_rec(&mut eval, a, b, fa, fm, fb, whole, tol, max_depth)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<E>(
    f: &mut impl FnMut(f64) -> Result<f64, QuadratureError<E>>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureError<E>> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureError::DepthExceeded { a, b });
    }
    let half_tol = 0.5 * tol;
    Ok(
        simpson_rec(f, a, m, fa, flm, fm, left, half_tol, depth - 1)?
            + simpson_rec(f, m, b, fm, frm, fb, right, half_tol, depth - 1)?,
    )
}

/// Adaptive Simpson over a path of breakpoints, so integrands with known
/// branch boundaries are not forced into deep subdivision at them.
pub fn adaptive_simpson_path<E>(
    f: &mut impl FnMut(f64) -> Result<f64, E>,
    points: &[f64],
    tol: f64,
    max_depth: u32,
) -> Result<f64, QuadratureError<E>> {
    let mut total = 0.0;
    for pair in points.windows(2) {
        total += adaptive_simpson(f, pair[0], pair[1], tol, max_depth)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BisectError<E> {
    Eval(E),
    /// Target is not enclosed by the available bracket.
    BracketFailure { y: f64, glo: f64, ghi: f64 },
    NoConvergence { best: f64, residual: f64 },
}

impl<E: fmt::Display> fmt::Display for BisectError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BisectError::Eval(e) => write!(f, "function evaluation failed: {e}"),
            BisectError::BracketFailure { y, glo, ghi } => write!(
                f,
                "target {y} outside bracketed range [{}, {}]",
                glo.min(*ghi),
                glo.max(*ghi)
            ),
            BisectError::NoConvergence { best, residual } => write!(
                f,
                "bisection stalled at {best} with residual {residual}"
            ),
        }
    }
}

impl<E: fmt::Display + fmt::Debug> std::error::Error for BisectError<E> {}

/// Solve `g(r) = y` for monotone `g` on `[lo, hi]` by bisection, stopping
/// when `|g(r) - y| <= tol`.
pub fn bisect_value<E>(
    g: &mut impl FnMut(f64) -> Result<f64, E>,
    y: f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: u32,
) -> Result<f64, BisectError<E>> {
    let mut eval = |x: f64| g(x).map_err(BisectError::Eval);
    let glo = eval(lo)?;
    if (glo - y).abs() <= tol {
        return Ok(lo);
    }
    let ghi = eval(hi)?;
    if (ghi - y).abs() <= tol {
        return Ok(hi);
    }
    let increasing = ghi >= glo;
    let (mut below, mut above) = if increasing { (lo, hi) } else { (hi, lo) };
    let (gmin, gmax) = if increasing { (glo, ghi) } else { (ghi, glo) };
    if y < gmin || y > gmax {
        return Err(BisectError::BracketFailure { y, glo, ghi });
    }
    let mut best = lo;
    let mut best_res = (glo - y).abs();
    for _ in 0..max_iter {
        let mid = 0.5 * (below + above);
        let gm = eval(mid)?;
        let res = (gm - y).abs();
        if res < best_res {
            best = mid;
            best_res = res;
        }
        if res <= tol {
            return Ok(mid);
        }
        if gm < y {
            below = mid;
        } else {
            above = mid;
        }
        if (above - below).abs() <= f64::EPSILON * (1.0 + below.abs().max(above.abs())) {
            break;
        }
    }
    if best_res <= tol {
        Ok(best)
    } else {
        Err(BisectError::NoConvergence {
            best,
            residual: best_res,
        })
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a maximum of `f` on `[a, b]`, returning the
/// best `(x, f(x))` seen (endpoints included). Exact for unimodal `f`;
/// callers bracket the extremum with a scan first.
pub fn golden_max<E>(
    f: &mut impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    xtol: f64,
) -> Result<(f64, f64), E> {
    debug_assert!(a <= b);
    let mut lo = a;
    let mut hi = b;
    let mut best_x = a;
    let mut best_v = f(a)?;
    let vb = f(b)?;
    if vb > best_v {
        best_x = b;
        best_v = vb;
    }
    if hi - lo <= xtol {
        return Ok((best_x, best_v));
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut v1 = f(x1)?;
    let mut v2 = f(x2)?;
    while hi - lo > xtol {
        if v1 >= v2 {
            hi = x2;
            x2 = x1;
            v2 = v1;
            x1 = hi - INV_PHI * (hi - lo);
            v1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            v1 = v2;
            x2 = lo + INV_PHI * (hi - lo);
            v2 = f(x2)?;
        }
        let (cx, cv) = if v1 >= v2 { (x1, v1) } else { (x2, v2) };
        if cv > best_v {
            best_x = cx;
            best_v = cv;
        }
    }
    Ok((best_x, best_v))
}

/// Golden-section search for a minimum; see [`golden_max`].
pub fn golden_min<E>(
    f: &mut impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    xtol: f64,
) -> Result<(f64, f64), E> {
    let (x, v) = golden_max(&mut |t| f(t).map(|v| -v), a, b, xtol)?;
    Ok((x, -v))
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InterpError {
    #[error("interpolation needs at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot abscissae must be strictly increasing and finite (index {0})")]
    BadKnots(usize),
    #[error("non-finite knot value at index {0}")]
    BadValue(usize),
    #[error("argument {x} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
}

/// Piecewise-cubic Hermite interpolant with Fritsch-Carlson slopes: C^1,
/// preserves the local monotonicity of the data, no overshoot.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<MonotoneCubic, InterpError> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(InterpError::TooFewKnots(n.min(ys.len())));
        }
        for i in 0..n {
            if !xs[i].is_finite() || (i > 0 && xs[i] <= xs[i - 1]) {
                return Err(InterpError::BadKnots(i));
            }
            if !ys[i].is_finite() {
                return Err(InterpError::BadValue(i));
            }
        }
        let ds = pchip_slopes(&xs, &ys);
        Ok(MonotoneCubic { xs, ys, ds })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    fn locate(&self, x: f64) -> Result<(usize, f64), InterpError> {
        let (lo, hi) = self.range();
        let slack = 1e-9 * (hi - lo);
        let xc = if x < lo && x >= lo - slack {
            lo
        } else if x > hi && x <= hi + slack {
            hi
        } else {
            x
        };
        if xc < lo || xc > hi {
            return Err(InterpError::OutOfRange { x, lo, hi });
        }
        // Cell index k with xs[k] <= xc <= xs[k+1].
        let k = match self.xs.binary_search_by(|p| p.partial_cmp(&xc).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i - 1,
        };
        Ok((k, xc))
    }

    pub fn eval(&self, x: f64) -> Result<f64, InterpError> {
        let (k, x) = self.locate(x)?;
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * self.ys[k]
            + h10 * h * self.ds[k]
            + h01 * self.ys[k + 1]
            + h11 * h * self.ds[k + 1])
    }

    /// Derivative of the interpolant. At interior knots the two adjacent
    /// cubics share the knot slope, so this is continuous.
    pub fn deriv(&self, x: f64) -> Result<f64, InterpError> {
        let (k, x) = self.locate(x)?;
        self.cell_deriv(k, x)
    }

    /// Derivative evaluated on the cubic piece on the side of `side_sign`
    /// relative to `x` (used near excluded kinks where only a one-sided
    /// slope is meaningful).
    pub fn deriv_one_sided(&self, x: f64, side_sign: f64) -> Result<f64, InterpError> {
        let (mut k, x) = self.locate(x)?;
        if side_sign < 0.0 && x == self.xs[k] && k > 0 {
            k -= 1;
        }
        self.cell_deriv(k, x)
    }

    fn cell_deriv(&self, k: usize, x: f64) -> Result<f64, InterpError> {
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        Ok(d00 * self.ys[k]
            + d10 * self.ds[k]
            + d01 * self.ys[k + 1]
            + d11 * self.ds[k + 1])
    }
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n == 2 {
        let d = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        return vec![d, d];
    }
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// Shape-preserving one-sided three-point slope estimate for an endpoint.
fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let mut d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        d = 0.0;
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        d = 3.0 * d0;
    }
    d
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (n as f64 - 1.0);
    let mut out: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    out[0] = lo;
    out[n - 1] = hi;
    out
}
