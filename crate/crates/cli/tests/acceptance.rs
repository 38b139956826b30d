//! Shipping gate: every test here exercises one release criterion end to
//! end and prints a single `ACCEPTANCE <n> <name>: PASS` or `: FAIL` line.
//! Run with `--nocapture` to see the lines on success; on failure the
//! collected reasons are part of the panic message.

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use issf_core::construct::{build_phi, build_rho, compose_barrier, ComposeOptions, PhiSpec};
use issf_core::field::{ScalarField, VectorField};
use issf_core::gains::{
    check_small_gain, dissipation_to_implication, ComparisonClass, GainFn, DEFAULT_WINDOW_RADIUS,
};
use issf_core::numeric::{adaptive_simpson, QUAD_MAX_DEPTH, QUAD_TOL};
use issf_core::verify::{
    check_composed_implication, check_forward_invariance, check_interconnection_hypotheses,
    check_issf_implication, simulate, BoxRegion, ImplicationReport, InputSignal,
    InvarianceOptions, SamplingPlan, Strategy, Verdict,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, reasons: &[String]) {
    let pass = reasons.is_empty();
    println!("ACCEPTANCE {n} {name}: {}", if pass { "PASS" } else { "FAIL" });
    assert!(
        pass,
        "acceptance criterion {n} ({name}) failed:\n{}",
        reasons.join("\n")
    );
}

fn gain(src: &str, class: ComparisonClass) -> GainFn {
    GainFn::from_expr(src, class, DEFAULT_WINDOW_RADIUS).unwrap()
}

/// The coupled pair of scalar subsystems the bundled scenario describes.
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

struct ExampleGains {
    phi1: GainFn,
    phi2: GainFn,
    gamma1: GainFn,
    gamma2: GainFn,
    alpha1: GainFn,
    alpha2: GainFn,
}

fn example_gains() -> ExampleGains {
    ExampleGains {
        phi1: gain("0.96 * r", ComparisonClass::ExtendedKInfty),
        phi2: gain("0.64 * r", ComparisonClass::ExtendedKInfty),
        gamma1: gain("2 * r^3", ComparisonClass::KInfty),
        gamma2: gain("2 * r", ComparisonClass::KInfty),
        alpha1: gain("0.5 * r", ComparisonClass::ExtendedK),
        alpha2: gain("0.5 * r", ComparisonClass::ExtendedK),
    }
}

/// The example certificate composed with the identity scaling.
fn example_barrier() -> issf_core::construct::ComposedBarrier {
    let g = example_gains();
    let h1 = ScalarField::parse("x1", &["x1"]).unwrap();
    let h2 = ScalarField::parse("x2", &["x2"]).unwrap();
    compose_barrier(
        &h1,
        &h2,
        PhiSpec::Override(GainFn::identity(DEFAULT_WINDOW_RADIUS)),
        &g.phi1,
        &g.phi2,
        &g.gamma1,
        &g.gamma2,
        &g.alpha1,
        &g.alpha2,
        &ComposeOptions::default(),
    )
    .unwrap()
}

fn example_plan(lo: f64, hi: f64, samples: usize, seed: u64) -> SamplingPlan {
    SamplingPlan {
        x1_box: BoxRegion::new(vec![lo], vec![hi]).unwrap(),
        x2_box: BoxRegion::new(vec![lo], vec![hi]).unwrap(),
        u_dim: 2,
        u_max: 1.0,
        samples,
        strategy: Strategy::LatinHypercube,
        seed,
    }
}

fn check_implication_report(
    label: &str,
    rep: &ImplicationReport,
    min_triggered: usize,
    tolerance: f64,
    reasons: &mut Vec<String>,
) {
    if rep.verdict != Verdict::Pass {
        reasons.push(format!("{label}: verdict {}", rep.verdict));
    }
    match rep.margins.worst {
        Some(w) if w >= -tolerance => {}
        w => reasons.push(format!("{label}: worst margin {w:?} below -{tolerance:e}")),
    }
    if rep.margins.triggered < min_triggered {
        reasons.push(format!(
            "{label}: only {} of {} samples triggered the antecedent",
            rep.margins.triggered, rep.margins.samples
        ));
    }
}

#[test]
fn acceptance_1_bundled_composition_contracts() {
    let mut reasons = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("example1.issf");
    fs::write(&scenario, include_str!("../scenarios/example1.issf")).unwrap();
    let out_dir = dir.path().join("out");

    let start = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_issf"))
        .arg("compose")
        .arg("--scenario")
        .arg(&scenario)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("compose runs");
    let elapsed = start.elapsed();

    if output.status.code() != Some(0) {
        reasons.push(format!(
            "compose exited with {:?}: {}",
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ));
    }
    if elapsed >= Duration::from_secs(1) {
        reasons.push(format!("compose took {elapsed:.2?}, budget is 1s"));
    }
    match serde_json::from_slice::<serde_json::Value>(&output.stdout) {
        Ok(json) => {
            if json["small_gain"]["satisfied"] != serde_json::Value::Bool(true) {
                reasons.push("report does not mark the small-gain test satisfied".to_string());
            }
        }
        Err(e) => reasons.push(format!("stdout is not JSON: {e}")),
    }

    // The tabulated composition must be 0.6144 r to near machine precision.
    match fs::read_to_string(out_dir.join("composition.csv")) {
        Ok(csv) => {
            let mut rows = 0usize;
            let mut max_dev = 0f64;
            for line in csv.lines().skip(1) {
                let mut parts = line.split(',');
                let r: f64 = parts.next().unwrap().parse().unwrap();
                let comp: f64 = parts.next().unwrap().parse().unwrap();
                max_dev = max_dev.max((comp - 0.6144 * r).abs());
                rows += 1;
            }
            if rows < 4097 {
                reasons.push(format!("composition.csv has only {rows} rows"));
            }
            if max_dev > 1e-12 {
                reasons.push(format!(
                    "composition deviates from 0.6144 r by {max_dev:.3e} (budget 1e-12)"
                ));
            }
        }
        Err(e) => reasons.push(format!("composition.csv missing: {e}")),
    }
    report(1, "bundled cross-gain composition contracts", &reasons);
}

#[test]
fn acceptance_2_subsystem_hypotheses_hold_at_scale() {
    let mut reasons = Vec::new();
    let f = example_field();
    let g = example_gains();
    let h1 = ScalarField::parse("x1", &["x1"]).unwrap();
    let h2 = ScalarField::parse("x2", &["x2"]).unwrap();
    let plan = example_plan(-5.0, 5.0, 100_000, 7);

    let start = Instant::now();
    let (sub1, sub2, verdict) = check_interconnection_hypotheses(
        &h1, &h2, &f, &g.phi1, &g.phi2, &g.gamma1, &g.gamma2, &g.alpha1, &g.alpha2, 1, &plan,
    )
    .unwrap();
    let elapsed = start.elapsed();

    check_implication_report("subsystem 1", &sub1, 1000, 1e-9, &mut reasons);
    check_implication_report("subsystem 2", &sub2, 1000, 1e-9, &mut reasons);
    if verdict != Verdict::Pass {
        reasons.push(format!("combined verdict {verdict}"));
    }
    if elapsed >= Duration::from_secs(30) {
        reasons.push(format!("check took {elapsed:.2?}, budget is 30s"));
    }
    report(2, "subsystem hypotheses hold on 100k samples", &reasons);
}

#[test]
fn acceptance_3_identity_scaling_composed_implication() {
    let mut reasons = Vec::new();
    let cb = example_barrier();

    // The composed certificate must encode the advertised set and decay:
    // triggered below -(2|u|^3 + 2|u|), decrease rate half the barrier.
    if cb.gamma().describe() != "2.0 * r ^ 3.0 + 2.0 * r" {
        reasons.push(format!("composed input gain is {}", cb.gamma().describe()));
    }
    for r in [-4.0, -2.5, -1.0, -0.1, 0.0] {
        let a = cb.alpha().eval(r).unwrap();
        if (a - 0.5 * r).abs() > 1e-9 {
            reasons.push(format!("composed decay at {r} is {a}, expected {}", 0.5 * r));
        }
    }

    let f = example_field();
    let plan = example_plan(-5.0, 0.0, 100_000, 7);
    let start = Instant::now();
    let rep = check_composed_implication(&cb, &f, &plan).unwrap();
    let elapsed = start.elapsed();

    check_implication_report("composed barrier", &rep, 1000, 1e-9, &mut reasons);
    if elapsed >= Duration::from_secs(30) {
        reasons.push(format!("check took {elapsed:.2?}, budget is 30s"));
    }
    report(3, "identity-scaled composition satisfies its decrease", &reasons);
}

#[test]
fn acceptance_4_trajectories_stay_in_the_inflated_set() {
    let mut reasons = Vec::new();
    let cb = example_barrier();
    let f = example_field();
    let mut opts = InvarianceOptions::new(
        BoxRegion::new(vec![-5.0], vec![0.0]).unwrap(),
        BoxRegion::new(vec![-5.0], vec![0.0]).unwrap(),
    );
    opts.trajectories = 100;
    opts.dt = 1e-3;
    opts.horizon = 20.0;
    opts.u_max = 1.0;
    opts.boundary_fraction = 0.3;
    opts.input_period = 1.0;
    opts.seed = 7;

    let start = Instant::now();
    let rep = check_forward_invariance(&cb, &f, &opts).unwrap();
    let elapsed = start.elapsed();

    if rep.gamma_cap != 4.0 {
        reasons.push(format!("inflation is {}, expected 4", rep.gamma_cap));
    }
    if rep.verdict != Verdict::Pass || rep.violations != 0 {
        reasons.push(format!(
            "verdict {} with {} violations",
            rep.verdict, rep.violations
        ));
        for s in rep.summaries.iter().filter(|s| s.violated).take(5) {
            reasons.push(format!(
                "  trajectory {}: min margin {}, note {:?}",
                s.index, s.min_margin, s.note
            ));
        }
    }
    match rep.worst_margin {
        Some(w) if w >= -1e-6 => {}
        w => reasons.push(format!("worst margin {w:?} below -1e-6")),
    }
    if rep.boundary_seeded != 30 {
        reasons.push(format!("{} boundary-seeded, expected 30", rep.boundary_seeded));
    }
    if elapsed >= Duration::from_secs(60) {
        reasons.push(format!("simulation took {elapsed:.2?}, budget is 60s"));
    }
    report(4, "simulated trajectories stay in the inflated set", &reasons);
}

/// A random pair of odd cubic cross-gains scaled so their composition
/// contracts by at least `1 - theta` in ratio over the construction window
/// plus its precheck margin.
fn random_contraction_pair(rng: &mut ChaCha8Rng, window: f64) -> (GainFn, GainFn) {
    let a1: f64 = rng.gen_range(0.2..1.5);
    let a3: f64 = rng.gen_range(0.2..1.5);
    let b1: f64 = rng.gen_range(0.2..1.5);
    let b3: f64 = rng.gen_range(0.2..1.5);
    let theta: f64 = rng.gen_range(0.5..0.9);
    let raw = GainFn::from_expr(
        &format!("{a1:?} * r + {a3:?} * r^3"),
        ComparisonClass::ExtendedKInfty,
        window,
    )
    .unwrap();
    let phi2 = GainFn::from_expr(
        &format!("{b1:?} * r + {b3:?} * r^3"),
        ComparisonClass::ExtendedKInfty,
        window,
    )
    .unwrap();
    // The composition-to-identity ratio of odd cubics with positive
    // coefficients grows with |r|, so capping it at the outer edge caps it
    // everywhere inside.
    let edge = window + 1.0;
    let ratio = raw.eval(phi2.eval(edge).unwrap()).unwrap() / edge;
    let phi1 = GainFn::scaled(theta / ratio, &raw).unwrap();
    (phi1, phi2)
}

#[test]
fn acceptance_5_width_construction_invariants() {
    let mut reasons = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1105);
    for pair_idx in 0..20 {
        let (phi1, phi2) = random_contraction_pair(&mut rng, 10.0);
        let sg = check_small_gain(&phi1, &phi2, 11.0, 2048).unwrap();
        if !sg.satisfied {
            reasons.push(format!("pair {pair_idx}: composition fails to contract"));
            continue;
        }
        let rho = match build_rho(&phi1, &phi2, 10.0, 4096) {
            Ok(r) => r,
            Err(e) => {
                reasons.push(format!("pair {pair_idx}: width construction failed: {e}"));
                continue;
            }
        };
        let (xs, ys) = rho.knots();
        if xs.len() != 4097 {
            reasons.push(format!("pair {pair_idx}: {} knots, expected 4097", xs.len()));
        }
        for (&r, &v) in xs.iter().zip(ys) {
            if r == 0.0 {
                if v != 0.0 {
                    reasons.push(format!("pair {pair_idx}: width is {v} at the origin"));
                }
                continue;
            }
            let bound = rho.rho0(r).unwrap();
            let sandwiched = v.signum() == r.signum() && v.abs() > 0.0 && v.abs() < bound.abs();
            if !sandwiched {
                reasons.push(format!(
                    "pair {pair_idx}: sandwich fails at r = {r}: width {v}, bound {bound}"
                ));
                break;
            }
        }
        for w in xs.windows(2).zip(ys.windows(2)) {
            let slope = (w.1[1] - w.1[0]) / (w.0[1] - w.0[0]);
            if !(slope.abs() < 0.5 + 1e-6) {
                reasons.push(format!(
                    "pair {pair_idx}: secant slope {slope} at r = {}",
                    w.0[0]
                ));
                break;
            }
        }
    }
    report(5, "averaging width invariants on 20 random pairs", &reasons);
}

#[test]
fn acceptance_6_scaling_construction_invariants() {
    let mut reasons = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1105);
    for pair_idx in 0..20 {
        let (phi1, phi2) = random_contraction_pair(&mut rng, 10.0);
        let rho = match build_rho(&phi1, &phi2, 10.0, 4096) {
            Ok(r) => r,
            Err(e) => {
                reasons.push(format!("pair {pair_idx}: width construction failed: {e}"));
                continue;
            }
        };
        let phi = match build_phi(&rho, &phi1, 4096) {
            Ok(p) => p,
            Err(e) => {
                reasons.push(format!("pair {pair_idx}: scaling construction failed: {e}"));
                continue;
            }
        };
        // Scaled-down cross-gains may need arguments far outside the window
        // to reach the outermost knots, so widen the bracket before
        // inverting.
        let mut edge = 10.0f64;
        while phi1.eval(edge).unwrap() < 10.0 {
            edge *= 2.0;
        }
        let inverse = phi1.clone().with_radius(edge).invert();
        let (xs, ys) = phi.knots();
        for (&r, &v) in xs.iter().zip(ys) {
            if r == 0.0 {
                if v != 0.0 {
                    reasons.push(format!("pair {pair_idx}: scaling is {v} at the origin"));
                }
                continue;
            }
            let inv = inverse.eval(r).unwrap();
            let cross = phi2.eval(r).unwrap();
            let ok = if r < 0.0 {
                inv < v && v < cross
            } else {
                cross < v && v < inv
            };
            if !ok {
                reasons.push(format!(
                    "pair {pair_idx}: envelope fails at r = {r}: inverse {inv}, scaling {v}, cross {cross}"
                ));
                break;
            }
        }
        if !(phi.report().min_slope > 0.0) {
            reasons.push(format!(
                "pair {pair_idx}: nonpositive knot slope {}",
                phi.report().min_slope
            ));
        }
        for r in [-9.5, -4.0, -1.0, -0.01, 0.01, 1.0, 4.0, 9.5] {
            let (d, _) = phi.deriv(r).unwrap();
            if !(d > 0.0) {
                reasons.push(format!("pair {pair_idx}: slope {d} at r = {r}"));
            }
        }
    }

    // For linear cross-gains the averaged inverse has a closed form.
    let lin1 = gain("0.96 * r", ComparisonClass::ExtendedKInfty);
    let lin2 = gain("0.64 * r", ComparisonClass::ExtendedKInfty);
    let rho = build_rho(&lin1, &lin2, 10.0, 4096).unwrap();
    let phi = build_phi(&rho, &lin1, 4096).unwrap();
    let (xs, ys) = phi.knots();
    let mut max_dev = 0f64;
    for (&r, &v) in xs.iter().zip(ys) {
        let expected = (r - rho.eval(r).unwrap() / 2.0) / 0.96;
        max_dev = max_dev.max((v - expected).abs());
    }
    if max_dev > 1e-8 {
        reasons.push(format!(
            "linear pair deviates from its closed form by {max_dev:.3e} (budget 1e-8)"
        ));
    }
    report(6, "scaling construction invariants on 20 random pairs", &reasons);
}

#[test]
fn acceptance_7_dissipation_conversion_implication() {
    let mut reasons = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2209);
    for trial in 0..10 {
        let b1: f64 = rng.gen_range(0.2..1.5);
        let b3: f64 = rng.gen_range(0.2..1.5);
        let a1: f64 = rng.gen_range(0.2..1.5);
        let a3: f64 = rng.gen_range(0.2..1.5);
        let c: f64 = rng.gen_range(0.2..0.8);
        let s2: f64 = rng.gen_range(0.0..0.3);
        let s3: f64 = rng.gen_range(0.0..0.3);

        let chi = GainFn::from_expr(
            &format!("{b1:?} * r + {b3:?} * r^3"),
            ComparisonClass::ExtendedKInfty,
            10.0,
        )
        .unwrap();
        let phi = GainFn::from_expr(
            &format!("{a1:?} * r + {a3:?} * r^3"),
            ComparisonClass::KInfty,
            10.0,
        )
        .unwrap();
        let conv = dissipation_to_implication(&chi, &phi, c).unwrap();

        let cert = conv.gamma_hat.certify_class();
        if !cert.holds || !cert.zero_at_zero || !cert.strictly_increasing {
            reasons.push(format!(
                "trial {trial}: converted gain fails certification: {:?}",
                cert.notes
            ));
        }
        if conv.gamma_hat.class().is_extended() {
            reasons.push(format!(
                "trial {trial}: converted gain claims an extended class"
            ));
        }

        // A one-dimensional system built to satisfy the dissipation bound
        // pointwise: derivative = -chi(x) - phi(|u|) + nonnegative slack.
        let h = ScalarField::parse("x", &["x"]).unwrap();
        let f_src = format!(
            "-({b1:?} * x + {b3:?} * x^3) - ({a1:?} * abs(u) + {a3:?} * abs(u)^3) \
             + {s2:?} * u^2 + {s3:?} * (1 - cos(x))"
        );
        let f = VectorField::parse(&[f_src.as_str()], &["x"], &["x"], &[], &["u"]).unwrap();
        let plan = SamplingPlan {
            x1_box: BoxRegion::new(vec![-8.0], vec![0.0]).unwrap(),
            x2_box: BoxRegion::new(vec![], vec![]).unwrap(),
            u_dim: 1,
            u_max: 0.75 * conv.gamma_hat.radius(),
            samples: 10_000,
            strategy: Strategy::LatinHypercube,
            seed: 7 + trial as u64,
        };
        let rep = check_issf_implication(&h, &f, &conv.gamma_hat, &conv.alpha_hat, &plan).unwrap();
        check_implication_report(&format!("trial {trial}"), &rep, 1, 1e-9, &mut reasons);
    }
    report(7, "dissipation-form conversions verify on random systems", &reasons);
}

#[test]
fn acceptance_8_numerical_kernel_tolerances() {
    let mut reasons = Vec::new();

    // Fourth-order integration of pure decay over one unit of time.
    let f = VectorField::parse(&["-x"], &["x"], &["x"], &[], &[]).unwrap();
    let traj = simulate(&f, &[1.0], &InputSignal::Constant(vec![]), 1e-3, 1.0).unwrap();
    let end = traj.state(traj.steps())[0];
    let err = (end - (-1.0f64).exp()).abs();
    if err > 1e-9 {
        reasons.push(format!("integrator endpoint error {err:.3e} exceeds 1e-9"));
    }

    // Symbolic gradients against central differences.
    let h = ScalarField::parse("sin(x) * y + exp(x * y) - y^2", &["x", "y"]).unwrap();
    let pt = [0.7, -1.3];
    let (grad, _) = h.gradient_at(&pt).unwrap();
    for i in 0..2 {
        let step = 1e-5 * (1.0 + pt[i].abs());
        let mut hi = pt;
        let mut lo = pt;
        hi[i] += step;
        lo[i] -= step;
        let fd = (h.value(&hi).unwrap().value - h.value(&lo).unwrap().value) / (2.0 * step);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
        if rel > 1e-6 {
            reasons.push(format!(
                "gradient component {i} is {} vs difference {fd} (rel {rel:.3e})",
                grad[i]
            ));
        }
    }

    // Adaptive quadrature on the cubic moment.
    let integral = adaptive_simpson(
        &mut |s: f64| Ok::<f64, std::convert::Infallible>(s * s * s),
        0.0,
        1.0,
        QUAD_TOL,
        QUAD_MAX_DEPTH,
    )
    .unwrap();
    if (integral - 0.25).abs() > 1e-12 {
        reasons.push(format!("cubic moment came out {integral}, expected 0.25"));
    }

    report(8, "numerical kernels meet their tolerances", &reasons);
}
