//! Scenario files: a flat, sectioned key-value format describing two
//! interconnected subsystems, their certificates, and how to test them.
//!
//! The format is line-based. `[section]` opens a section, `key = value`
//! adds an entry, `#` starts a comment line, and expressions that belong to
//! lists (the dynamics components) are double-quoted and comma-separated.
//! Parsing is strict: unknown sections, unknown keys, duplicate keys, and
//! malformed values are errors that name the offending line. After parsing,
//! every declared comparison-class claim is certified numerically before
//! any command runs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use issf_core::field::{ScalarField, VectorField};
use issf_core::gains::{ComparisonClass, GainFn};
use issf_core::verify::{BoxRegion, Strategy};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

/// One subsystem block as written in the file.
#[derive(Debug, Clone)]
pub struct SubsystemSpec {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub dynamics: Vec<String>,
    pub barrier: String,
    pub alpha: String,
    pub alpha_class: ComparisonClass,
    pub cross_gain: String,
    pub cross_class: ComparisonClass,
    pub input_gain: String,
    pub input_class: ComparisonClass,
}

#[derive(Debug, Clone)]
pub struct ComposeSpec {
    pub phi_override: Option<String>,
    pub window_radius: f64,
    pub grid_size: usize,
}

impl Default for ComposeSpec {
    fn default() -> ComposeSpec {
        ComposeSpec {
            phi_override: None,
            window_radius: 10.0,
            grid_size: 4096,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SamplingSpec {
    pub x1_box: Vec<(f64, f64)>,
    pub x2_box: Vec<(f64, f64)>,
    /// Optional tighter boxes for checks on the composed barrier.
    pub composed_x1_box: Option<Vec<(f64, f64)>>,
    pub composed_x2_box: Option<Vec<(f64, f64)>>,
    pub u_max: f64,
    pub samples: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub dt: f64,
    pub horizon: f64,
    pub trajectories: usize,
    pub boundary_fraction: f64,
    pub input_period: f64,
}

impl Default for SimulationSpec {
    fn default() -> SimulationSpec {
        SimulationSpec {
            dt: 1e-3,
            horizon: 20.0,
            trajectories: 100,
            boundary_fraction: 0.3,
            input_period: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub sub1: SubsystemSpec,
    pub sub2: SubsystemSpec,
    pub compose: ComposeSpec,
    pub sampling: SamplingSpec,
    pub simulation: SimulationSpec,
}

/// A scenario with everything parsed, cross-validated, and class-certified.
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub field: VectorField,
    pub h1: ScalarField,
    pub h2: ScalarField,
    pub phi1: GainFn,
    pub phi2: GainFn,
    pub gamma1: GainFn,
    pub gamma2: GainFn,
    pub alpha1: GainFn,
    pub alpha2: GainFn,
    pub phi_override: Option<GainFn>,
    /// Inputs `0..u_split` drive subsystem 1, the rest subsystem 2.
    pub u_split: usize,
}

impl LoadedScenario {
    pub fn box_region(pairs: &[(f64, f64)]) -> Result<BoxRegion, ScenarioError> {
        let lo: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let hi: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        BoxRegion::new(lo, hi).map_err(|e| ScenarioError::Invalid(e.to_string()))
    }

    pub fn x1_region(&self) -> Result<BoxRegion, ScenarioError> {
        Self::box_region(&self.scenario.sampling.x1_box)
    }

    pub fn x2_region(&self) -> Result<BoxRegion, ScenarioError> {
        Self::box_region(&self.scenario.sampling.x2_box)
    }

    /// Boxes used for composed-barrier checks; fall back to the main boxes.
    pub fn composed_regions(&self) -> Result<(BoxRegion, BoxRegion), ScenarioError> {
        let s = &self.scenario.sampling;
        let b1 = Self::box_region(s.composed_x1_box.as_ref().unwrap_or(&s.x1_box))?;
        let b2 = Self::box_region(s.composed_x2_box.as_ref().unwrap_or(&s.x2_box))?;
        Ok((b1, b2))
    }
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Key-value view of one section that tracks which keys were consumed so
/// unknown keys can be rejected by name.
struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn require(&mut self, key: &str) -> Result<(String, usize), ScenarioError> {
        self.take(key).ok_or_else(|| {
            parse_err(
                self.line,
                format!("[{}] is missing the required key `{key}`", self.name),
            )
        })
    }

    fn finish(&self) -> Result<(), ScenarioError> {
        for (key, entry) in &self.entries {
            if !entry.used {
                return Err(parse_err(
                    entry.line,
                    format!("unknown key `{key}` in [{}]", self.name),
                ));
            }
        }
        Ok(())
    }
}

fn split_sections(source: &str) -> Result<Vec<Section>, ScenarioError> {
    const KNOWN: &[&str] = &["subsystem1", "subsystem2", "compose", "sampling", "simulation"];
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line_no, "section header is missing `]`"))?
                .trim()
                .to_string();
            if !KNOWN.contains(&name.as_str()) {
                return Err(parse_err(
                    line_no,
                    format!("unknown section [{name}] (known: {})", KNOWN.join(", ")),
                ));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(parse_err(line_no, format!("duplicate section [{name}]")));
            }
            sections.push(Section {
                name,
                line: line_no,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let Some(section) = sections.last_mut() else {
            return Err(parse_err(line_no, "entry appears before any [section] header"));
        };
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(line_no, "expected `key = value`"));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(parse_err(line_no, "empty key"));
        }
        if section
            .entries
            .insert(
                key.clone(),
                Entry {
                    value,
                    line: line_no,
                    used: false,
                },
            )
            .is_some()
        {
            return Err(parse_err(
                line_no,
                format!("duplicate key `{key}` in [{}]", section.name),
            ));
        }
    }
    Ok(sections)
}

fn parse_scalar<T: FromStr>(value: &str, line: usize, what: &str) -> Result<T, ScenarioError>
where
    T::Err: Display,
{
    value
        .parse::<T>()
        .map_err(|e| parse_err(line, format!("{what}: {e} (got `{value}`)")))
}

fn parse_words(value: &str) -> Vec<String> {
    value.split_whitespace().map(|w| w.to_string()).collect()
}

/// Bounds come as whitespace-separated `lo hi` pairs, one pair per state.
fn parse_box(value: &str, line: usize, key: &str) -> Result<Vec<(f64, f64)>, ScenarioError> {
    let nums: Vec<f64> = value
        .split_whitespace()
        .map(|w| parse_scalar::<f64>(w, line, key))
        .collect::<Result<_, _>>()?;
    if nums.is_empty() || nums.len() % 2 != 0 {
        return Err(parse_err(
            line,
            format!("`{key}` needs one `lo hi` pair per state, got {} numbers", nums.len()),
        ));
    }
    let pairs: Vec<(f64, f64)> = nums.chunks(2).map(|c| (c[0], c[1])).collect();
    for &(lo, hi) in &pairs {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(parse_err(line, format!("`{key}` pair {lo} {hi} is not ordered")));
        }
    }
    Ok(pairs)
}

/// Dynamics components are double-quoted expressions separated by commas.
fn parse_expr_list(value: &str, line: usize) -> Result<Vec<String>, ScenarioError> {
    let mut out = Vec::new();
    let mut rest = value.trim_start();
    loop {
        let Some(stripped) = rest.strip_prefix('"') else {
            return Err(parse_err(
                line,
                "dynamics must be double-quoted expressions separated by commas",
            ));
        };
        let Some(end) = stripped.find('"') else {
            return Err(parse_err(line, "unterminated quote in dynamics list"));
        };
        out.push(stripped[..end].to_string());
        rest = stripped[end + 1..].trim_start();
        if rest.is_empty() {
            return Ok(out);
        }
        rest = rest
            .strip_prefix(',')
            .ok_or_else(|| parse_err(line, "expected a comma between quoted expressions"))?
            .trim_start();
    }
}

fn parse_class(value: &str, line: usize) -> Result<ComparisonClass, ScenarioError> {
    value
        .parse::<ComparisonClass>()
        .map_err(|e| parse_err(line, e.to_string()))
}

fn parse_subsystem(section: &mut Section) -> Result<SubsystemSpec, ScenarioError> {
    let (states, sl) = section.require("states")?;
    let (inputs, _) = section.require("inputs")?;
    let (f, fl) = section.require("f")?;
    let (h, _) = section.require("h")?;
    let (alpha, _) = section.require("alpha")?;
    let (alpha_class, acl) = section.require("alpha_class")?;
    let (cross, _) = section.require("cross_gain")?;
    let (cross_class, ccl) = section.require("cross_class")?;
    let (input_gain, _) = section.require("input_gain")?;
    let (input_class, icl) = section.require("input_class")?;
    let spec = SubsystemSpec {
        states: parse_words(&states),
        inputs: parse_words(&inputs),
        dynamics: parse_expr_list(&f, fl)?,
        barrier: h,
        alpha,
        alpha_class: parse_class(&alpha_class, acl)?,
        cross_gain: cross,
        cross_class: parse_class(&cross_class, ccl)?,
        input_gain,
        input_class: parse_class(&input_class, icl)?,
    };
    if spec.states.is_empty() {
        return Err(parse_err(sl, format!("[{}] declares no states", section.name)));
    }
    if spec.dynamics.len() != spec.states.len() {
        return Err(parse_err(
            fl,
            format!(
                "[{}] declares {} states but {} dynamics components",
                section.name,
                spec.states.len(),
                spec.dynamics.len()
            ),
        ));
    }
    section.finish()?;
    Ok(spec)
}

fn parse_compose(section: &mut Section) -> Result<ComposeSpec, ScenarioError> {
    let mut spec = ComposeSpec::default();
    if let Some((v, _)) = section.take("phi_override") {
        spec.phi_override = Some(v);
    }
    if let Some((v, l)) = section.take("window_radius") {
        spec.window_radius = parse_scalar(&v, l, "window_radius")?;
    }
    if let Some((v, l)) = section.take("grid_size") {
        spec.grid_size = parse_scalar(&v, l, "grid_size")?;
    }
    section.finish()?;
    Ok(spec)
}

fn parse_sampling(section: &mut Section) -> Result<SamplingSpec, ScenarioError> {
    let (x1, l1) = section.require("x1_box")?;
    let (x2, l2) = section.require("x2_box")?;
    let composed_x1 = section
        .take("composed_x1_box")
        .map(|(v, l)| parse_box(&v, l, "composed_x1_box"))
        .transpose()?;
    let composed_x2 = section
        .take("composed_x2_box")
        .map(|(v, l)| parse_box(&v, l, "composed_x2_box"))
        .transpose()?;
    let (u_max, lu) = section.require("u_max")?;
    let (samples, ls) = section.require("samples")?;
    let strategy = match section.take("strategy") {
        Some((v, l)) => v
            .parse::<Strategy>()
            .map_err(|e| parse_err(l, e.to_string()))?,
        None => Strategy::LatinHypercube,
    };
    let seed = match section.take("seed") {
        Some((v, l)) => parse_scalar(&v, l, "seed")?,
        None => 0,
    };
    let spec = SamplingSpec {
        x1_box: parse_box(&x1, l1, "x1_box")?,
        x2_box: parse_box(&x2, l2, "x2_box")?,
        composed_x1_box: composed_x1,
        composed_x2_box: composed_x2,
        u_max: parse_scalar(&u_max, lu, "u_max")?,
        samples: parse_scalar(&samples, ls, "samples")?,
        strategy,
        seed,
    };
    section.finish()?;
    Ok(spec)
}

fn parse_simulation(section: &mut Section) -> Result<SimulationSpec, ScenarioError> {
    let mut spec = SimulationSpec::default();
    if let Some((v, l)) = section.take("dt") {
        spec.dt = parse_scalar(&v, l, "dt")?;
    }
    if let Some((v, l)) = section.take("horizon") {
        spec.horizon = parse_scalar(&v, l, "horizon")?;
    }
    if let Some((v, l)) = section.take("trajectories") {
        spec.trajectories = parse_scalar(&v, l, "trajectories")?;
    }
    if let Some((v, l)) = section.take("boundary_fraction") {
        spec.boundary_fraction = parse_scalar(&v, l, "boundary_fraction")?;
    }
    if let Some((v, l)) = section.take("input_period") {
        spec.input_period = parse_scalar(&v, l, "input_period")?;
    }
    section.finish()?;
    Ok(spec)
}

pub fn parse_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    let mut sections = split_sections(source)?;
    let mut sub1 = None;
    let mut sub2 = None;
    let mut compose = None;
    let mut sampling = None;
    let mut simulation = None;
    for section in &mut sections {
        match section.name.as_str() {
            "subsystem1" => sub1 = Some(parse_subsystem(section)?),
            "subsystem2" => sub2 = Some(parse_subsystem(section)?),
            "compose" => compose = Some(parse_compose(section)?),
            "sampling" => sampling = Some(parse_sampling(section)?),
            "simulation" => simulation = Some(parse_simulation(section)?),
            _ => unreachable!("section names are filtered while splitting"),
        }
    }
    let missing = |name: &str| ScenarioError::Invalid(format!("missing required section [{name}]"));
    Ok(Scenario {
        sub1: sub1.ok_or_else(|| missing("subsystem1"))?,
        sub2: sub2.ok_or_else(|| missing("subsystem2"))?,
        compose: compose.unwrap_or_default(),
        sampling: sampling.ok_or_else(|| missing("sampling"))?,
        simulation: simulation.unwrap_or_default(),
    })
}

fn certify(
    gain: &GainFn,
    what: &str,
) -> Result<(), ScenarioError> {
    let cert = gain.certify_class();
    if cert.holds {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(format!(
            "{what} fails its declared class-{} claim: {}",
            cert.claimed.name(),
            if cert.notes.is_empty() {
                "certification failed".to_string()
            } else {
                cert.notes.join("; ")
            }
        )))
    }
}

fn build_gain(
    source: &str,
    class: ComparisonClass,
    radius: f64,
    what: &str,
) -> Result<GainFn, ScenarioError> {
    let gain = GainFn::from_expr(source, class, radius)
        .map_err(|e| ScenarioError::Invalid(format!("{what}: {e}")))?;
    certify(&gain, what)?;
    Ok(gain)
}

/// Cross-validate a parsed scenario: assemble the interconnected field,
/// parse the barriers over their own state blocks, and certify every gain
/// against its declared class.
pub fn load_parsed(scenario: Scenario) -> Result<LoadedScenario, ScenarioError> {
    let s1 = &scenario.sub1;
    let s2 = &scenario.sub2;
    let components: Vec<&str> = s1
        .dynamics
        .iter()
        .chain(&s2.dynamics)
        .map(|s| s.as_str())
        .collect();
    let outputs: Vec<&str> = s1.states.iter().chain(&s2.states).map(|s| s.as_str()).collect();
    let x1: Vec<&str> = s1.states.iter().map(|s| s.as_str()).collect();
    let x2: Vec<&str> = s2.states.iter().map(|s| s.as_str()).collect();
    let u: Vec<&str> = s1.inputs.iter().chain(&s2.inputs).map(|s| s.as_str()).collect();
    let field = VectorField::parse(&components, &outputs, &x1, &x2, &u)
        .map_err(|e| ScenarioError::Invalid(format!("dynamics: {e}")))?;
    let h1 = ScalarField::parse(&s1.barrier, &x1)
        .map_err(|e| ScenarioError::Invalid(format!("barrier of [subsystem1]: {e}")))?;
    let h2 = ScalarField::parse(&s2.barrier, &x2)
        .map_err(|e| ScenarioError::Invalid(format!("barrier of [subsystem2]: {e}")))?;

    let sampling = &scenario.sampling;
    if sampling.x1_box.len() != x1.len() || sampling.x2_box.len() != x2.len() {
        return Err(ScenarioError::Invalid(format!(
            "sampling boxes cover ({}, {}) states, subsystems declare ({}, {})",
            sampling.x1_box.len(),
            sampling.x2_box.len(),
            x1.len(),
            x2.len()
        )));
    }
    for (key, pairs) in [
        ("composed_x1_box", &sampling.composed_x1_box),
        ("composed_x2_box", &sampling.composed_x2_box),
    ] {
        let dim = if key == "composed_x1_box" { x1.len() } else { x2.len() };
        if let Some(p) = pairs {
            if p.len() != dim {
                return Err(ScenarioError::Invalid(format!(
                    "`{key}` covers {} states, expected {dim}",
                    p.len()
                )));
            }
        }
    }
    if !(sampling.u_max >= 0.0 && sampling.u_max.is_finite()) {
        return Err(ScenarioError::Invalid(format!(
            "u_max must be finite and nonnegative, got {}",
            sampling.u_max
        )));
    }
    if sampling.samples == 0 {
        return Err(ScenarioError::Invalid("samples must be positive".into()));
    }
    let sim = &scenario.simulation;
    if !(sim.dt > 0.0 && sim.horizon > 0.0 && sim.input_period > 0.0) {
        return Err(ScenarioError::Invalid(
            "dt, horizon, and input_period must all be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&sim.boundary_fraction) {
        return Err(ScenarioError::Invalid(format!(
            "boundary_fraction must lie in [0, 1], got {}",
            sim.boundary_fraction
        )));
    }

    let radius = scenario.compose.window_radius;
    let phi1 = build_gain(&s1.cross_gain, s1.cross_class, radius, "cross_gain of [subsystem1]")?;
    let phi2 = build_gain(&s2.cross_gain, s2.cross_class, radius, "cross_gain of [subsystem2]")?;
    for (name, g) in [("subsystem1", &phi1), ("subsystem2", &phi2)] {
        if !g.class().is_extended() {
            return Err(ScenarioError::Invalid(format!(
                "cross_gain of [{name}] must declare an extended class, got {}",
                g.class().name()
            )));
        }
    }
    let gamma1 = build_gain(&s1.input_gain, s1.input_class, radius, "input_gain of [subsystem1]")?;
    let gamma2 = build_gain(&s2.input_gain, s2.input_class, radius, "input_gain of [subsystem2]")?;
    let alpha1 = build_gain(&s1.alpha, s1.alpha_class, radius, "alpha of [subsystem1]")?;
    let alpha2 = build_gain(&s2.alpha, s2.alpha_class, radius, "alpha of [subsystem2]")?;
    let phi_override = scenario
        .compose
        .phi_override
        .as_ref()
        .map(|src| {
            build_gain(
                src,
                ComparisonClass::ExtendedKInfty,
                radius,
                "phi_override in [compose]",
            )
        })
        .transpose()?;

    let u_split = s1.inputs.len();
    Ok(LoadedScenario {
        scenario,
        field,
        h1,
        h2,
        phi1,
        phi2,
        gamma1,
        gamma2,
        alpha1,
        alpha2,
        phi_override,
        u_split,
    })
}

pub fn load_str(source: &str) -> Result<LoadedScenario, ScenarioError> {
    load_parsed(parse_scenario(source)?)
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let source = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    load_str(&source)
}

/// The bundled two-subsystem example scenario.
pub const EXAMPLE1: &str = include_str!("../scenarios/example1.issf");
