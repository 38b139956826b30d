//! The four subcommands. Each one loads a scenario, runs checks from the
//! core crate, writes a single JSON report line to stdout, and returns the
//! process exit code: 0 pass, 1 fail, 2 inconclusive. Configuration and
//! usage problems surface as errors, which the caller maps to exit 3.
//! Human-readable progress, timings, and the composed-set description go
//! to stderr so stdout stays machine-parsable and byte-deterministic.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use issf_core::construct::{
    build_phi, build_rho, compose_barrier, ComposeOptions, ComposedBarrier, PhiReport, PhiSpec,
    RhoFn, RhoReport,
};
use issf_core::field::VectorField;
use issf_core::gains::{
    check_small_gain, ClassCertificate, ComparisonClass, GainFn, SmallGainReport,
};
use issf_core::numeric::linspace;
use issf_core::verify::{
    check_composed_implication, check_forward_invariance, check_interconnection_hypotheses,
    invariance_initial_state, invariance_input, simulate, ImplicationReport, InvarianceOptions,
    InvarianceReport, SamplingPlan, Verdict, REPORT_SCHEMA_VERSION,
};
use serde::Serialize;

use crate::scenario::{self, LoadedScenario};
use crate::{ExampleArgs, RunArgs};

/// At most this many trajectories get a CSV: every violation first, then
/// the smallest margins.
const TRAJECTORY_CSV_LIMIT: usize = 5;

fn exit_code(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 2,
    }
}

fn emit<T: Serialize>(payload: &T) -> Result<()> {
    let text = serde_json::to_string(payload).context("serializing the report")?;
    println!("{text}");
    Ok(())
}

fn scenario_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn ensure_out_dir(dir: &PathBuf) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Sampling plan over the full scenario boxes, with flag overrides applied.
fn plan_from(
    loaded: &LoadedScenario,
    samples: Option<usize>,
    seed: Option<u64>,
) -> Result<SamplingPlan> {
    let s = &loaded.scenario.sampling;
    let (_, _, m) = loaded.field.dims();
    Ok(SamplingPlan {
        x1_box: loaded.x1_region()?,
        x2_box: loaded.x2_region()?,
        u_dim: m,
        u_max: s.u_max,
        samples: samples.unwrap_or(s.samples),
        strategy: s.strategy,
        seed: seed.unwrap_or(s.seed),
    })
}

/// Same plan but over the (possibly tighter) composed-check boxes.
fn composed_plan_from(
    loaded: &LoadedScenario,
    samples: Option<usize>,
    seed: Option<u64>,
) -> Result<SamplingPlan> {
    let mut plan = plan_from(loaded, samples, seed)?;
    let (b1, b2) = loaded.composed_regions()?;
    plan.x1_box = b1;
    plan.x2_box = b2;
    Ok(plan)
}

fn invariance_opts(
    loaded: &LoadedScenario,
    trajectories: Option<usize>,
    dt: Option<f64>,
    horizon: Option<f64>,
    seed: Option<u64>,
) -> Result<InvarianceOptions> {
    let sim = &loaded.scenario.simulation;
    let sampling = &loaded.scenario.sampling;
    let (b1, b2) = loaded.composed_regions()?;
    let mut opts = InvarianceOptions::new(b1, b2);
    opts.trajectories = trajectories.unwrap_or(sim.trajectories);
    opts.dt = dt.unwrap_or(sim.dt);
    opts.horizon = horizon.unwrap_or(sim.horizon);
    opts.u_max = sampling.u_max;
    opts.boundary_fraction = sim.boundary_fraction;
    opts.input_period = sim.input_period;
    opts.seed = seed.unwrap_or(sampling.seed);
    Ok(opts)
}

/// A composed certificate plus the intermediate width table when the
/// scaling was constructed rather than supplied.
struct Built {
    barrier: ComposedBarrier,
    rho: Option<RhoFn>,
    mode: &'static str,
}

/// Resolve the scaling (command-line override, then scenario override, then
/// construction) and compose the certificate. Callers must have already
/// passed the small-gain test.
fn build_certificate(loaded: &LoadedScenario, flag_override: Option<&str>) -> Result<Built> {
    let c = &loaded.scenario.compose;
    let options = ComposeOptions {
        window_radius: c.window_radius,
        grid_size: c.grid_size,
    };
    let override_gain = match flag_override {
        Some(src) => {
            let gain = GainFn::from_expr(src, ComparisonClass::ExtendedKInfty, c.window_radius)
                .context("parsing --phi-override")?;
            let cert = gain.certify_class();
            if !cert.holds {
                bail!(
                    "--phi-override fails its extended-Kinf class check: {}",
                    cert.notes.join("; ")
                );
            }
            Some(gain)
        }
        None => loaded.phi_override.clone(),
    };
    let compose_with = |spec: PhiSpec| {
        compose_barrier(
            &loaded.h1,
            &loaded.h2,
            spec,
            &loaded.phi1,
            &loaded.phi2,
            &loaded.gamma1,
            &loaded.gamma2,
            &loaded.alpha1,
            &loaded.alpha2,
            &options,
        )
    };
    match override_gain {
        Some(gain) => {
            let barrier =
                compose_with(PhiSpec::Override(gain)).context("validating the scaling override")?;
            Ok(Built {
                barrier,
                rho: None,
                mode: "override",
            })
        }
        None => {
            let rho = build_rho(&loaded.phi1, &loaded.phi2, c.window_radius, c.grid_size)
                .context("building the averaging width")?;
            let phi =
                build_phi(&rho, &loaded.phi1, c.grid_size).context("building the scaling")?;
            let barrier = compose_with(PhiSpec::Constructed(phi))
                .context("composing the certificate")?;
            Ok(Built {
                barrier,
                rho: Some(rho),
                mode: "constructed",
            })
        }
    }
}

/// One line describing the certified set, with the input gain written in
/// terms of the input magnitude.
fn composed_set_line(cb: &ComposedBarrier) -> String {
    let gamma: Vec<String> = cb
        .gamma()
        .describe()
        .split_whitespace()
        .map(|tok| {
            if tok == "r" {
                "|u|".to_string()
            } else {
                tok.to_string()
            }
        })
        .collect();
    let h1 = cb.h1().expr().pretty();
    let h2 = cb.h2().expr().pretty();
    let first = if cb.is_override() && cb.phi_description() == "r" {
        h1
    } else {
        format!("phi({h1})")
    };
    format!("min{{{first}, {h2}}} + {} >= 0", gamma.join(" "))
}

/// Symmetric window grid with an even interval count, matching the one the
/// small-gain test sweeps.
fn window_grid(window_radius: f64, grid_size: usize) -> Vec<f64> {
    let grid = {
        let g = grid_size.max(2);
        g + g % 2
    };
    linspace(-window_radius, window_radius, grid + 1)
}

fn write_curve_csv<F>(
    dir: &Path,
    name: &str,
    header: &str,
    xs: &[f64],
    mut f: F,
) -> Result<String>
where
    F: FnMut(f64) -> Result<f64>,
{
    let path = dir.join(name);
    let file =
        File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{header}")?;
    for &x in xs {
        let y = f(x)?;
        writeln!(out, "{x},{y}")?;
    }
    out.flush()?;
    Ok(name.to_string())
}

/// Tabulate the cross-gain composition against the identity over the
/// window; the gap column is positive wherever the contraction holds.
fn write_composition_csv(loaded: &LoadedScenario, dir: &Path) -> Result<String> {
    let c = &loaded.scenario.compose;
    let name = "composition.csv";
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "r,phi1_phi2,gap")?;
    for r in window_grid(c.window_radius, c.grid_size) {
        let comp = loaded.phi1.eval(loaded.phi2.eval(r)?)?;
        let gap = r.signum() * (r - comp);
        writeln!(out, "{r},{comp},{gap}")?;
    }
    out.flush()?;
    Ok(name.to_string())
}

/// Tables for the composed certificate: the scaling and input gain always,
/// the averaging width when one was constructed.
fn write_certificate_csvs(built: &Built, loaded: &LoadedScenario, dir: &Path) -> Result<Vec<String>> {
    let c = &loaded.scenario.compose;
    let mut files = Vec::new();
    if let Some(rho) = &built.rho {
        let path = dir.join("rho.csv");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        rho.write_csv(BufWriter::new(file))
            .with_context(|| format!("writing {}", path.display()))?;
        files.push("rho.csv".to_string());
    }
    let grid = window_grid(c.window_radius, c.grid_size);
    files.push(write_curve_csv(dir, "phi.csv", "r,phi", &grid, |r| {
        Ok(built.barrier.phi_eval(r)?)
    })?);
    let gamma = built.barrier.gamma();
    let gamma_grid = linspace(0.0, gamma.radius(), c.grid_size.max(2) + 1);
    files.push(write_curve_csv(dir, "gamma.csv", "r,gamma", &gamma_grid, |r| {
        Ok(gamma.eval(r)?)
    })?);
    Ok(files)
}

/// Re-simulate the most interesting trajectories deterministically and dump
/// them with a running margin column.
fn write_trajectory_csvs(
    cb: &ComposedBarrier,
    f: &VectorField,
    opts: &InvarianceOptions,
    report: &InvarianceReport,
    dir: &Path,
) -> Result<Vec<String>> {
    let (n1, _, m) = f.dims();
    let n = f.state_dim();
    let gamma_cap = cb.gamma().eval(opts.u_max)?;
    let state_names = &f.vars()[..n];
    let input_names = f.u_vars();
    let mut order: Vec<_> = report.summaries.iter().collect();
    order.sort_by(|a, b| {
        b.violated.cmp(&a.violated).then(
            a.min_margin
                .partial_cmp(&b.min_margin)
                .unwrap_or(std::cmp::Ordering::Equal),
        )
    });
    let mut files = Vec::new();
    for summary in order.into_iter().take(TRAJECTORY_CSV_LIMIT) {
        let idx = summary.index;
        let (initial, _, _) = invariance_initial_state(cb, f, opts, idx)?;
        let input = invariance_input(opts, idx, m);
        let traj = match simulate(f, &initial, &input, opts.dt, opts.horizon) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("trajectory {idx}: re-simulation stopped early ({e}); no CSV written");
                continue;
            }
        };
        let margins: Vec<f64> = (0..=traj.steps())
            .map(|k| {
                let x = traj.state(k);
                cb.value_split(&x[..n1], &x[n1..])
                    .map(|split| split.h + gamma_cap)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let name = format!("trajectory_{idx:03}.csv");
        let path = dir.join(&name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        traj.write_csv(
            state_names,
            input_names,
            Some(("margin", &|k| margins[k])),
            BufWriter::new(file),
        )
        .with_context(|| format!("writing {}", path.display()))?;
        files.push(name);
    }
    files.sort();
    Ok(files)
}

#[derive(Serialize)]
struct CheckSubsystemsOutput<'a> {
    schema_version: u32,
    command: &'static str,
    scenario: String,
    verdict: Verdict,
    subsystem1: &'a ImplicationReport,
    subsystem2: &'a ImplicationReport,
}

pub fn cmd_check_subsystems(args: &RunArgs) -> Result<i32> {
    let loaded = scenario::load_scenario(&args.scenario)?;
    let plan = plan_from(&loaded, args.common.samples, args.common.seed)?;
    let start = Instant::now();
    let (sub1, sub2, verdict) = check_interconnection_hypotheses(
        &loaded.h1,
        &loaded.h2,
        &loaded.field,
        &loaded.phi1,
        &loaded.phi2,
        &loaded.gamma1,
        &loaded.gamma2,
        &loaded.alpha1,
        &loaded.alpha2,
        loaded.u_split,
        &plan,
    )?;
    eprintln!(
        "checked both subsystem hypotheses on {} samples in {:.2?}",
        plan.samples,
        start.elapsed()
    );
    emit(&CheckSubsystemsOutput {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "check-subsystems",
        scenario: scenario_label(&args.scenario),
        verdict,
        subsystem1: &sub1,
        subsystem2: &sub2,
    })?;
    Ok(exit_code(verdict))
}

#[derive(Serialize)]
struct ComposeOutput<'a> {
    schema_version: u32,
    command: &'static str,
    scenario: String,
    verdict: Verdict,
    small_gain: &'a SmallGainReport,
    phi_mode: Option<&'static str>,
    phi: Option<String>,
    rho_report: Option<&'a RhoReport>,
    phi_report: Option<&'a PhiReport>,
    gamma: Option<String>,
    gamma_certificate: Option<&'a ClassCertificate>,
    alpha: Option<String>,
    alpha_certificate: Option<&'a ClassCertificate>,
    set: Option<String>,
    files: Vec<String>,
    notes: Vec<String>,
}

pub fn cmd_compose(args: &RunArgs) -> Result<i32> {
    let loaded = scenario::load_scenario(&args.scenario)?;
    ensure_out_dir(&args.common.out)?;
    let c = &loaded.scenario.compose;
    let start = Instant::now();
    let small_gain = check_small_gain(&loaded.phi1, &loaded.phi2, c.window_radius, c.grid_size)?;
    let mut files = vec![write_composition_csv(&loaded, &args.common.out)?];
    if !small_gain.satisfied {
        emit(&ComposeOutput {
            schema_version: REPORT_SCHEMA_VERSION,
            command: "compose",
            scenario: scenario_label(&args.scenario),
            verdict: Verdict::Fail,
            small_gain: &small_gain,
            phi_mode: None,
            phi: None,
            rho_report: None,
            phi_report: None,
            gamma: None,
            gamma_certificate: None,
            alpha: None,
            alpha_certificate: None,
            set: None,
            files,
            notes: vec![
                "the cross-gain composition is not a contraction; construction skipped"
                    .to_string(),
            ],
        })?;
        return Ok(1);
    }
    let built = build_certificate(&loaded, args.common.phi_override.as_deref())?;
    files.extend(write_certificate_csvs(&built, &loaded, &args.common.out)?);
    let set = composed_set_line(&built.barrier);
    eprintln!("composed in {:.2?}", start.elapsed());
    eprintln!("certified set: {set}");
    emit(&ComposeOutput {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "compose",
        scenario: scenario_label(&args.scenario),
        verdict: Verdict::Pass,
        small_gain: &small_gain,
        phi_mode: Some(built.mode),
        phi: Some(built.barrier.phi_description()),
        rho_report: built.rho.as_ref().map(|r| r.report()),
        phi_report: built.barrier.phi_report(),
        gamma: Some(built.barrier.gamma().describe()),
        gamma_certificate: Some(built.barrier.gamma_cert()),
        alpha: Some(built.barrier.alpha().describe()),
        alpha_certificate: Some(built.barrier.alpha_cert()),
        set: Some(set),
        files,
        notes: built.barrier.notes().to_vec(),
    })?;
    Ok(0)
}

#[derive(Serialize)]
struct InvarianceOutput<'a> {
    schema_version: u32,
    command: &'static str,
    scenario: String,
    verdict: Verdict,
    report: &'a InvarianceReport,
    files: Vec<String>,
}

pub fn cmd_verify_invariance(args: &RunArgs) -> Result<i32> {
    let loaded = scenario::load_scenario(&args.scenario)?;
    ensure_out_dir(&args.common.out)?;
    let c = &loaded.scenario.compose;
    let small_gain = check_small_gain(&loaded.phi1, &loaded.phi2, c.window_radius, c.grid_size)?;
    if !small_gain.satisfied {
        bail!("the cross-gain composition is not a contraction; there is no certificate to verify");
    }
    let built = build_certificate(&loaded, args.common.phi_override.as_deref())?;
    let opts = invariance_opts(&loaded, args.common.trajectories, args.common.dt, args.common.horizon, args.common.seed)?;
    let start = Instant::now();
    let report = check_forward_invariance(&built.barrier, &loaded.field, &opts)?;
    eprintln!(
        "simulated {} trajectories in {:.2?}",
        report.trajectories,
        start.elapsed()
    );
    let files = write_trajectory_csvs(&built.barrier, &loaded.field, &opts, &report, &args.common.out)?;
    let verdict = report.verdict;
    emit(&InvarianceOutput {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "verify-invariance",
        scenario: scenario_label(&args.scenario),
        verdict,
        report: &report,
        files,
    })?;
    Ok(exit_code(verdict))
}

#[derive(Serialize)]
struct Example1Output<'a> {
    schema_version: u32,
    command: &'static str,
    scenario: &'static str,
    verdict: Verdict,
    small_gain: &'a SmallGainReport,
    subsystem1: Option<&'a ImplicationReport>,
    subsystem2: Option<&'a ImplicationReport>,
    composed: Option<&'a ImplicationReport>,
    invariance: Option<&'a InvarianceReport>,
    set: Option<String>,
    files: Vec<String>,
}

/// Full pipeline on the bundled scenario: small-gain test, certificate
/// composition, both subsystem hypotheses, the composed implication, and
/// forward invariance under simulation.
pub fn cmd_example1(args: &ExampleArgs) -> Result<i32> {
    let loaded = scenario::load_str(scenario::EXAMPLE1).context("loading the bundled scenario")?;
    ensure_out_dir(&args.common.out)?;
    let c = &loaded.scenario.compose;

    let stage = Instant::now();
    let small_gain = check_small_gain(&loaded.phi1, &loaded.phi2, c.window_radius, c.grid_size)?;
    eprintln!("small-gain test: {:.2?}", stage.elapsed());
    let mut files = vec![write_composition_csv(&loaded, &args.common.out)?];
    if !small_gain.satisfied {
        emit(&Example1Output {
            schema_version: REPORT_SCHEMA_VERSION,
            command: "example1",
            scenario: "example1 (bundled)",
            verdict: Verdict::Fail,
            small_gain: &small_gain,
            subsystem1: None,
            subsystem2: None,
            composed: None,
            invariance: None,
            set: None,
            files,
        })?;
        return Ok(1);
    }

    let stage = Instant::now();
    let built = build_certificate(&loaded, args.common.phi_override.as_deref())?;
    eprintln!("certificate composition: {:.2?}", stage.elapsed());
    files.extend(write_certificate_csvs(&built, &loaded, &args.common.out)?);

    let plan = plan_from(&loaded, args.common.samples, args.common.seed)?;
    let stage = Instant::now();
    let (sub1, sub2, hyp_verdict) = check_interconnection_hypotheses(
        &loaded.h1,
        &loaded.h2,
        &loaded.field,
        &loaded.phi1,
        &loaded.phi2,
        &loaded.gamma1,
        &loaded.gamma2,
        &loaded.alpha1,
        &loaded.alpha2,
        loaded.u_split,
        &plan,
    )?;
    eprintln!(
        "subsystem hypotheses ({} samples): {:.2?}",
        plan.samples,
        stage.elapsed()
    );

    let composed_plan = composed_plan_from(&loaded, args.common.samples, args.common.seed)?;
    let stage = Instant::now();
    let composed = check_composed_implication(&built.barrier, &loaded.field, &composed_plan)?;
    eprintln!(
        "composed implication ({} samples): {:.2?}",
        composed_plan.samples,
        stage.elapsed()
    );

    let opts = invariance_opts(&loaded, args.common.trajectories, args.common.dt, args.common.horizon, args.common.seed)?;
    let stage = Instant::now();
    let invariance = check_forward_invariance(&built.barrier, &loaded.field, &opts)?;
    eprintln!(
        "forward invariance ({} trajectories): {:.2?}",
        opts.trajectories,
        stage.elapsed()
    );
    files.extend(write_trajectory_csvs(
        &built.barrier,
        &loaded.field,
        &opts,
        &invariance,
        &args.common.out,
    )?);

    let set = composed_set_line(&built.barrier);
    eprintln!("certified set: {set}");

    let verdict = [hyp_verdict, composed.verdict, invariance.verdict]
        .into_iter()
        .fold(Verdict::Pass, Verdict::combine);
    emit(&Example1Output {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "example1",
        scenario: "example1 (bundled)",
        verdict,
        small_gain: &small_gain,
        subsystem1: Some(&sub1),
        subsystem2: Some(&sub2),
        composed: Some(&composed),
        invariance: Some(&invariance),
        set: Some(set),
        files,
    })?;
    Ok(exit_code(verdict))
}
