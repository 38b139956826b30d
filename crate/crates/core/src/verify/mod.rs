//! Numerical verification of barrier conditions by dense sampling and
//! simulation.
//!
//! The pointwise checks sample a boxed domain, evaluate an implication of
//! the form "antecedent at the sample implies a derivative bound", and
//! report margins, counterexamples, and a verdict. Samples where the
//! antecedent is false are vacuous; if every sample is vacuous the verdict
//! is inconclusive rather than a hollow pass. The forward-invariance check
//! integrates trajectories from inside the certified set and watches the
//! inflated barrier value along each one.
//!
//! Everything is deterministic for a fixed seed: sampling uses counter-mode
//! streams, parallel evaluation preserves sample order, and reports carry
//! no timing information.

pub mod report;
pub mod sampling;
pub mod simulate;

use rayon::prelude::*;
use thiserror::Error;

use crate::construct::{ComposedBarrier, ComposedDini, ConstructError};
use crate::expr::EvalError;
use crate::field::{FieldError, LieOperator, ScalarField, VectorField};
use crate::gains::{GainError, GainFn};

pub use report::{
    Counterexample, ImplicationReport, InvarianceReport, MarginStats, TrajectorySummary,
    Verdict, REPORT_SCHEMA_VERSION,
};
pub use sampling::{BoxRegion, PointSet, SamplingPlan, Strategy};
pub use simulate::{simulate, InputSignal, SimulateError, Trajectory, BLOWUP_NORM, SEED_MIX};

/// Margin tolerance for pointwise derivative checks.
pub const POINTWISE_TOL: f64 = 1e-9;
/// Margin tolerance for the trajectory-based invariance check, looser to
/// absorb integration error.
pub const INVARIANCE_TOL: f64 = 1e-6;
/// Cap on reported counterexamples; the total count is still recorded.
pub const MAX_COUNTEREXAMPLES: usize = 32;
/// Boundary-seeded initial states are bisected until the inflated barrier
/// value is within this of zero.
pub const BOUNDARY_VALUE_TOL: f64 = 1e-3;
/// Mixing constant for per-trajectory initial-state streams, distinct from
/// [`SEED_MIX`] so state seeds never collide with input seeds.
const INIT_SEED_MIX: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error("invalid sampling plan: {0}")]
    Plan(String),
    #[error("initial-state seeding failed: {0}")]
    Seeding(String),
}

fn euclidean(xs: &[f64]) -> f64 {
    xs.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn require_extended(name: &str, g: &GainFn) -> Result<(), VerifyError> {
    if g.class().is_extended() {
        Ok(())
    } else {
        Err(VerifyError::Plan(format!(
            "{name} must be an extended-class gain (it is evaluated at negative \
             barrier values), got {}",
            g.class().name()
        )))
    }
}

fn validate_dims(f: &VectorField, plan: &SamplingPlan) -> Result<(), VerifyError> {
    let (n1, n2, m) = f.dims();
    if plan.x1_box.dim() != n1 || plan.x2_box.dim() != n2 || plan.u_dim != m {
        return Err(VerifyError::Plan(format!(
            "plan dimensions ({}, {}, {}) do not match the field ({n1}, {n2}, {m})",
            plan.x1_box.dim(),
            plan.x2_box.dim(),
            plan.u_dim
        )));
    }
    Ok(())
}

/// Check that a barrier was declared over exactly the given variable block,
/// in order, so positional slicing is sound.
fn validate_barrier_vars(
    name: &str,
    h: &ScalarField,
    block: &[String],
) -> Result<(), VerifyError> {
    if h.vars() != block {
        return Err(VerifyError::Plan(format!(
            "{name} is declared over {:?} but the field block is {:?}; declare the \
             barrier over the full block in field order",
            h.vars(),
            block
        )));
    }
    Ok(())
}

/// Gathers a barrier's arguments out of a full sample point by name.
struct BoundBarrier<'a> {
    h: &'a ScalarField,
    slots: Vec<usize>,
}

impl<'a> BoundBarrier<'a> {
    fn new(h: &'a ScalarField, f: &VectorField) -> Result<BoundBarrier<'a>, VerifyError> {
        let slots = h
            .vars()
            .iter()
            .map(|v| {
                f.vars().iter().position(|n| n == v).ok_or_else(|| {
                    VerifyError::Plan(format!("barrier variable {v} is not a field variable"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundBarrier { h, slots })
    }

    fn value(&self, point: &[f64]) -> Result<f64, EvalError> {
        let args: Vec<f64> = self.slots.iter().map(|&s| point[s]).collect();
        Ok(self.h.value(&args)?.value)
    }
}

enum PointOutcome {
    Vacuous,
    Margin { value: f64, nonsmooth: bool },
}

/// Evaluate `eval` at every sample in parallel (order-preserving), then
/// aggregate margins, re-check candidate counterexamples sequentially, and
/// assemble the report.
fn run_pointwise<F>(
    check: &str,
    points: &PointSet,
    tolerance: f64,
    eval: F,
) -> Result<ImplicationReport, VerifyError>
where
    F: Fn(&[f64]) -> Result<PointOutcome, VerifyError> + Sync,
{
    let outcomes: Vec<Result<PointOutcome, VerifyError>> = (0..points.len())
        .into_par_iter()
        .map(|i| eval(points.point(i)))
        .collect();

    let mut margins = Vec::new();
    let mut violations: Vec<(usize, f64)> = Vec::new();
    let mut nonsmooth = 0usize;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            PointOutcome::Vacuous => {}
            PointOutcome::Margin { value, nonsmooth: kinked } => {
                margins.push(value);
                if kinked {
                    nonsmooth += 1;
                }
                if value < -tolerance {
                    violations.push((i, value));
                }
            }
        }
    }

    let mut notes = Vec::new();
    let mut counterexamples = Vec::new();
    let mut dropped = 0usize;
    for &(i, _) in violations.iter().take(MAX_COUNTEREXAMPLES) {
        // Re-evaluate before reporting; a counterexample must reproduce.
        match eval(points.point(i))? {
            PointOutcome::Margin { value, .. } if value < -tolerance => {
                counterexamples.push(Counterexample {
                    point: points.point(i).to_vec(),
                    margin: value,
                    detail: format!("margin {value:.6e} is below -{tolerance:.1e}"),
                });
            }
            _ => dropped += 1,
        }
    }
    if violations.len() > MAX_COUNTEREXAMPLES {
        notes.push(format!(
            "showing the first {MAX_COUNTEREXAMPLES} of {} violations",
            violations.len()
        ));
    }
    if dropped > 0 {
        notes.push(format!(
            "{dropped} candidate counterexamples did not reproduce on recheck"
        ));
    }
    if nonsmooth > 0 {
        notes.push(format!(
            "{nonsmooth} triggered samples evaluated near an expression kink"
        ));
    }

    let verdict = if !violations.is_empty() {
        Verdict::Fail
    } else if margins.is_empty() {
        notes.push("no sample triggered the antecedent; nothing was verified".into());
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(ImplicationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        check: check.to_string(),
        verdict,
        tolerance,
        margins: MarginStats::from_margins(points.len(), &margins),
        counterexamples,
        notes,
    })
}

/// Sampled check of the safety implication for a single system: wherever
/// `h(x) <= -gamma(|u|)`, require `grad h . f >= -alpha(h) - tol`.
pub fn check_issf_implication(
    h: &ScalarField,
    f: &VectorField,
    gamma: &GainFn,
    alpha: &GainFn,
    plan: &SamplingPlan,
) -> Result<ImplicationReport, VerifyError> {
    validate_dims(f, plan)?;
    require_extended("alpha", alpha)?;
    let bound = BoundBarrier::new(h, f)?;
    let op = LieOperator::new(h, f)?;
    let n = f.state_dim();
    let points = plan.points()?;
    run_pointwise("issf-implication", &points, POINTWISE_TOL, |pt| {
        let hv = bound.value(pt)?;
        let g = gamma.eval(euclidean(&pt[n..]))?;
        if hv > -g {
            return Ok(PointOutcome::Vacuous);
        }
        let mut scratch = Vec::new();
        let lie = op.eval(h, f, pt, &mut scratch)?;
        let decay = alpha.eval(hv)?;
        Ok(PointOutcome::Margin {
            value: lie.value + decay,
            nonsmooth: lie.nonsmooth,
        })
    })
}

/// Sampled check of both interconnection hypotheses on a shared sample set.
///
/// Subsystem `i` is triggered where
/// `h_i <= -max{ phi_i(|h_j|), gamma_i(|u_i|) }` and must then satisfy
/// `grad h_i . f >= -alpha_i(h_i) - tol`. The input block is split at
/// `u_split`: the first `u_split` inputs drive subsystem 1, the rest
/// subsystem 2. Returns both reports and the combined verdict.
pub fn check_interconnection_hypotheses(
    h1: &ScalarField,
    h2: &ScalarField,
    f: &VectorField,
    phi1: &GainFn,
    phi2: &GainFn,
    gamma1: &GainFn,
    gamma2: &GainFn,
    alpha1: &GainFn,
    alpha2: &GainFn,
    u_split: usize,
    plan: &SamplingPlan,
) -> Result<(ImplicationReport, ImplicationReport, Verdict), VerifyError> {
    validate_dims(f, plan)?;
    require_extended("alpha1", alpha1)?;
    require_extended("alpha2", alpha2)?;
    let (_, _, m) = f.dims();
    if u_split > m {
        return Err(VerifyError::Plan(format!(
            "input split {u_split} exceeds the {m} declared inputs"
        )));
    }
    let n = f.state_dim();
    let points = plan.points()?;

    let run_side = |check: &str,
                    own: &ScalarField,
                    other: &ScalarField,
                    phi: &GainFn,
                    gamma: &GainFn,
                    alpha: &GainFn,
                    u_lo: usize,
                    u_hi: usize|
     -> Result<ImplicationReport, VerifyError> {
        let bound_own = BoundBarrier::new(own, f)?;
        let bound_other = BoundBarrier::new(other, f)?;
        let op = LieOperator::new(own, f)?;
        run_pointwise(check, &points, POINTWISE_TOL, |pt| {
            let hv = bound_own.value(pt)?;
            let partner = bound_other.value(pt)?;
            let cross = phi.eval(partner.abs())?;
            let input = gamma.eval(euclidean(&pt[n + u_lo..n + u_hi]))?;
            if hv > -cross.max(input) {
                return Ok(PointOutcome::Vacuous);
            }
            let mut scratch = Vec::new();
            let lie = op.eval(own, f, pt, &mut scratch)?;
            let decay = alpha.eval(hv)?;
            Ok(PointOutcome::Margin {
                value: lie.value + decay,
                nonsmooth: lie.nonsmooth,
            })
        })
    };

    let first = run_side(
        "interconnection-subsystem-1",
        h1,
        h2,
        phi1,
        gamma1,
        alpha1,
        0,
        u_split,
    )?;
    let second = run_side(
        "interconnection-subsystem-2",
        h2,
        h1,
        phi2,
        gamma2,
        alpha2,
        u_split,
        m,
    )?;
    let verdict = first.verdict.combine(second.verdict);
    Ok((first, second, verdict))
}

/// Sampled check of the implication for a composed barrier: wherever
/// `min{ phi(h1), h2 } <= -gamma(|u|)`, the lower Dini derivative along the
/// field must satisfy `D+ h >= -alpha(h) - tol`.
pub fn check_composed_implication(
    cb: &ComposedBarrier,
    f: &VectorField,
    plan: &SamplingPlan,
) -> Result<ImplicationReport, VerifyError> {
    validate_dims(f, plan)?;
    validate_barrier_vars("the first barrier", cb.h1(), f.x1_vars())?;
    validate_barrier_vars("the second barrier", cb.h2(), f.x2_vars())?;
    let (n1, n2, _) = f.dims();
    let n = n1 + n2;
    let points = plan.points()?;
    run_pointwise("composed-implication", &points, POINTWISE_TOL, |pt| {
        let split = cb.value_split(&pt[..n1], &pt[n1..n])?;
        let g = cb.gamma().eval(euclidean(&pt[n..]))?;
        if split.h > -g {
            return Ok(PointOutcome::Vacuous);
        }
        let dini = ComposedDini::new(cb, f)?.eval(pt)?;
        let decay = cb.alpha().eval(split.h)?;
        Ok(PointOutcome::Margin {
            value: dini.value + decay,
            nonsmooth: dini.nonsmooth || dini.phi_kink,
        })
    })
}

/// The same implication seen through the nonnegative deficit
/// `V(x) = max{ 0, -h(x) }`: wherever `V > 0` and `V >= gamma(|u|)`, require
/// `grad V . f <= alpha(-V) + tol`.
pub fn v_function_decrease(
    h: &ScalarField,
    f: &VectorField,
    gamma: &GainFn,
    alpha: &GainFn,
    plan: &SamplingPlan,
) -> Result<ImplicationReport, VerifyError> {
    validate_dims(f, plan)?;
    require_extended("alpha", alpha)?;
    let bound = BoundBarrier::new(h, f)?;
    let op = LieOperator::new(h, f)?;
    let n = f.state_dim();
    let points = plan.points()?;
    run_pointwise("v-function-decrease", &points, POINTWISE_TOL, |pt| {
        let hv = bound.value(pt)?;
        let deficit = (-hv).max(0.0);
        let g = gamma.eval(euclidean(&pt[n..]))?;
        if !(deficit > 0.0 && deficit >= g) {
            return Ok(PointOutcome::Vacuous);
        }
        let mut scratch = Vec::new();
        let lie = op.eval(h, f, pt, &mut scratch)?;
        // grad V . f = -grad h . f on { V > 0 }, and -V = h there.
        let margin = alpha.eval(-deficit)? + lie.value;
        Ok(PointOutcome::Margin {
            value: margin,
            nonsmooth: lie.nonsmooth,
        })
    })
}

/// Parameters for the trajectory-based invariance check of the inflated set
/// `{ x : h(x) + gamma(u_max) >= 0 }`.
#[derive(Debug, Clone)]
pub struct InvarianceOptions {
    pub x1_box: BoxRegion,
    pub x2_box: BoxRegion,
    pub trajectories: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Inputs are drawn from the closed Euclidean ball of this radius.
    pub u_max: f64,
    /// Fraction of trajectories whose initial state is bisected onto the
    /// boundary of the inflated set.
    pub boundary_fraction: f64,
    /// Switching period of the random piecewise-constant inputs.
    pub input_period: f64,
    pub seed: u64,
    pub tolerance: f64,
}

impl InvarianceOptions {
    pub fn new(x1_box: BoxRegion, x2_box: BoxRegion) -> InvarianceOptions {
        InvarianceOptions {
            x1_box,
            x2_box,
            trajectories: 100,
            dt: 1e-3,
            horizon: 20.0,
            u_max: 1.0,
            boundary_fraction: 0.3,
            input_period: 1.0,
            seed: 0,
            tolerance: INVARIANCE_TOL,
        }
    }

    fn boundary_count(&self) -> usize {
        (self.boundary_fraction * self.trajectories as f64).round() as usize
    }
}

/// The input signal used for trajectory `idx`; exposed so callers can replay
/// a specific trajectory without rerunning the whole check.
pub fn invariance_input(opts: &InvarianceOptions, idx: usize, dim: usize) -> InputSignal {
    InputSignal::RandomPiecewise {
        dim,
        period: opts.input_period,
        radius: opts.u_max,
        seed: opts.seed ^ (idx as u64).wrapping_mul(SEED_MIX),
    }
}

/// The initial state for trajectory `idx`: a rejection sample from inside
/// the inflated set, bisected onto its boundary for the first
/// `boundary_fraction` of trajectories. Returns the state, whether it was
/// boundary-seeded, and an optional note. Deterministic per index.
pub fn invariance_initial_state(
    cb: &ComposedBarrier,
    f: &VectorField,
    opts: &InvarianceOptions,
    idx: usize,
) -> Result<(Vec<f64>, bool, Option<String>), VerifyError> {
    use rand::SeedableRng;
    let (n1, _, _) = f.dims();
    let gamma_cap = cb.gamma().eval(opts.u_max)?;
    let region = opts.x1_box.concat(&opts.x2_box);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
        opts.seed ^ (idx as u64).wrapping_mul(INIT_SEED_MIX),
    );
    let value = |x: &[f64]| -> Result<f64, VerifyError> {
        Ok(cb.value_split(&x[..n1], &x[n1..])?.h + gamma_cap)
    };

    let mut inside = vec![0.0; region.dim()];
    let mut found = false;
    for _ in 0..10_000 {
        region.sample_into(&mut rng, &mut inside);
        if value(&inside)? >= 0.0 {
            found = true;
            break;
        }
    }
    if !found {
        return Err(VerifyError::Seeding(format!(
            "no state inside the certified set was found in 10000 draws \
             (gamma cap {gamma_cap:.3})"
        )));
    }
    if idx >= opts.boundary_count() {
        return Ok((inside, false, None));
    }

    let mut outside = vec![0.0; region.dim()];
    let mut found_outside = false;
    for _ in 0..10_000 {
        region.sample_into(&mut rng, &mut outside);
        if value(&outside)? < 0.0 {
            found_outside = true;
            break;
        }
    }
    if !found_outside {
        return Ok((
            inside,
            false,
            Some("set covers the sampled box; kept an interior seed".into()),
        ));
    }
    // Bisect between the inside and outside points, keeping the inside end.
    let mut a = inside;
    let mut b = outside;
    let mut va = value(&a)?;
    for _ in 0..200 {
        if va <= BOUNDARY_VALUE_TOL {
            break;
        }
        let mid: Vec<f64> = a.iter().zip(&b).map(|(&p, &q)| 0.5 * (p + q)).collect();
        let vm = value(&mid)?;
        if vm >= 0.0 {
            a = mid;
            va = vm;
        } else {
            b = mid;
        }
    }
    Ok((a, true, None))
}

/// Integrate trajectories from inside `{ h + gamma(u_max) >= 0 }` under
/// seeded random inputs and verify the set is never left by more than the
/// tolerance. Blow-ups and barrier evaluations that leave a tabulated
/// window are recorded as violations with a note rather than silent errors.
pub fn check_forward_invariance(
    cb: &ComposedBarrier,
    f: &VectorField,
    opts: &InvarianceOptions,
) -> Result<InvarianceReport, VerifyError> {
    let (n1, n2, m) = f.dims();
    if opts.x1_box.dim() != n1 || opts.x2_box.dim() != n2 {
        return Err(VerifyError::Plan(format!(
            "box dimensions ({}, {}) do not match the field ({n1}, {n2})",
            opts.x1_box.dim(),
            opts.x2_box.dim()
        )));
    }
    validate_barrier_vars("the first barrier", cb.h1(), f.x1_vars())?;
    validate_barrier_vars("the second barrier", cb.h2(), f.x2_vars())?;
    if opts.trajectories == 0 {
        return Err(VerifyError::Plan("trajectory count must be positive".into()));
    }
    let gamma_cap = cb.gamma().eval(opts.u_max)?;

    let run_one = |idx: usize| -> Result<TrajectorySummary, VerifyError> {
        let (x0, boundary, mut note) = invariance_initial_state(cb, f, opts, idx)?;
        let input = invariance_input(opts, idx, m);
        let mut min_margin = f64::INFINITY;
        let mut violated = false;
        match simulate(f, &x0, &input, opts.dt, opts.horizon) {
            Ok(traj) => {
                for k in 0..=traj.steps() {
                    let state = traj.state(k);
                    match cb.value_split(&state[..n1], &state[n1..]) {
                        Ok(split) => {
                            let margin = split.h + gamma_cap;
                            min_margin = min_margin.min(margin);
                            if margin < -opts.tolerance {
                                violated = true;
                            }
                        }
                        Err(e) => {
                            violated = true;
                            note = Some(format!(
                                "barrier evaluation failed at t = {:.6}: {e}",
                                traj.time(k)
                            ));
                            break;
                        }
                    }
                }
            }
            Err(SimulateError::BlowUp { time, norm }) => {
                violated = true;
                note = Some(format!(
                    "state reached magnitude {norm:.3e} at t = {time:.6}"
                ));
            }
            Err(other) => return Err(other.into()),
        }
        Ok(TrajectorySummary {
            index: idx,
            boundary_seeded: boundary,
            min_margin,
            violated,
            note,
        })
    };

    let summaries: Vec<Result<TrajectorySummary, VerifyError>> = (0..opts.trajectories)
        .into_par_iter()
        .map(run_one)
        .collect();
    let mut collected = Vec::with_capacity(opts.trajectories);
    for s in summaries {
        collected.push(s?);
    }

    let violations = collected.iter().filter(|s| s.violated).count();
    let boundary_seeded = collected.iter().filter(|s| s.boundary_seeded).count();
    let worst = collected
        .iter()
        .map(|s| s.min_margin)
        .filter(|m| m.is_finite())
        .fold(None, |acc: Option<f64>, m| {
            Some(acc.map_or(m, |a| a.min(m)))
        });
    let mut notes = Vec::new();
    for s in &collected {
        if let Some(n) = &s.note {
            notes.push(format!("trajectory {}: {n}", s.index));
        }
    }
    let verdict = if violations > 0 {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    Ok(InvarianceReport {
        schema_version: REPORT_SCHEMA_VERSION,
        check: "forward-invariance".into(),
        verdict,
        tolerance: opts.tolerance,
        gamma_cap,
        u_max: opts.u_max,
        dt: opts.dt,
        horizon: opts.horizon,
        trajectories: opts.trajectories,
        boundary_seeded,
        violations,
        worst_margin: worst,
        summaries: collected,
        notes,
    })
}
