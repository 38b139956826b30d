//! Report types shared by the verification checks. Field order is part of
//! the JSON contract; reports carry no timing or host information so that
//! identical inputs serialize to identical bytes.

use serde::Serialize;
use std::fmt;

/// Current `schema_version` stamped into every report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Every triggered sample satisfied the check.
    Pass,
    /// At least one confirmed violation.
    Fail,
    /// Nothing was actually checked (for example, no sample triggered the
    /// antecedent), so no conclusion is claimed.
    Inconclusive,
}

impl Verdict {
    /// Merge verdicts: any failure dominates, then any inconclusive.
    pub fn combine(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Aggregate margin statistics over the triggered samples.
#[derive(Debug, Clone, Serialize)]
pub struct MarginStats {
    /// Samples evaluated.
    pub samples: usize,
    /// Samples whose antecedent held, i.e. that actually constrained the
    /// verdict.
    pub triggered: usize,
    /// Smallest margin among triggered samples.
    pub worst: Option<f64>,
    /// Mean margin among triggered samples.
    pub mean: Option<f64>,
}

impl MarginStats {
    pub fn from_margins(samples: usize, margins: &[f64]) -> MarginStats {
        if margins.is_empty() {
            return MarginStats {
                samples,
                triggered: 0,
                worst: None,
                mean: None,
            };
        }
        let mut worst = f64::INFINITY;
        let mut sum = 0.0;
        for &m in margins {
            worst = worst.min(m);
            sum += m;
        }
        MarginStats {
            samples,
            triggered: margins.len(),
            worst: Some(worst),
            mean: Some(sum / margins.len() as f64),
        }
    }
}

/// A sample that violated the check, re-evaluated once before being
/// reported.
#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    /// Full point, ordered like the field's variable list.
    pub point: Vec<f64>,
    pub margin: f64,
    pub detail: String,
}

/// Outcome of a pointwise implication check.
#[derive(Debug, Clone, Serialize)]
pub struct ImplicationReport {
    pub schema_version: u32,
    /// Which check produced this report.
    pub check: String,
    pub verdict: Verdict,
    /// Margins below `-tolerance` count as violations.
    pub tolerance: f64,
    pub margins: MarginStats,
    /// At most [`MAX_COUNTEREXAMPLES`](crate::verify::MAX_COUNTEREXAMPLES)
    /// entries, in sample order.
    pub counterexamples: Vec<Counterexample>,
    pub notes: Vec<String>,
}

/// Per-trajectory outcome of the forward-invariance check.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub index: usize,
    /// Whether the initial state was bisected onto the set boundary.
    pub boundary_seeded: bool,
    /// Smallest value of `h + gamma_cap` along the trajectory.
    pub min_margin: f64,
    pub violated: bool,
    pub note: Option<String>,
}

/// Outcome of the forward-invariance check.
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub schema_version: u32,
    pub check: String,
    pub verdict: Verdict,
    /// Margins below `-tolerance` count as violations.
    pub tolerance: f64,
    /// `gamma(u_max)`, the inflation added to the barrier value.
    pub gamma_cap: f64,
    pub u_max: f64,
    pub dt: f64,
    pub horizon: f64,
    pub trajectories: usize,
    pub boundary_seeded: usize,
    pub violations: usize,
    /// Smallest margin over all trajectories.
    pub worst_margin: Option<f64>,
    pub summaries: Vec<TrajectorySummary>,
    pub notes: Vec<String>,
}
