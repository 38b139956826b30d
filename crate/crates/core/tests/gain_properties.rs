//! Cross-cutting properties of comparison-class gains: inversion accuracy,
//! composition algebra, and scale invariance of the small-gain test.

use issf_core::gains::{
    check_small_gain, ComparisonClass, GainFn, DEFAULT_CERT_GRID, DEFAULT_WINDOW_RADIUS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gain(src: &str, class: ComparisonClass) -> GainFn {
    GainFn::from_expr(src, class, DEFAULT_WINDOW_RADIUS).unwrap()
}

/// `g(g^{-1}(y))` recovers `y` within the documented inversion tolerance
/// across linear, cubic, saturating, and mixed-shape gains.
#[test]
fn inversion_is_a_right_inverse() {
    let cases = [
        gain("0.96 * r", ComparisonClass::ExtendedKInfty),
        gain("2 * r^3", ComparisonClass::KInfty),
        gain("r + 0.5 * r^3", ComparisonClass::ExtendedKInfty),
        gain("r / (1 + abs(r))", ComparisonClass::ExtendedK),
        gain("0.3 * r + sin(0.1 * r)", ComparisonClass::ExtendedKInfty),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for g in &cases {
        let inv = g.invert();
        let extended = g.class().is_extended();
        // Keep targets inside the forward range of the window.
        let span = g.eval(g.radius() * 0.99).unwrap();
        for _ in 0..200 {
            let y = if extended {
                rng.gen_range(-span..span)
            } else {
                rng.gen_range(0.0..span)
            };
            let r = inv.eval(y).unwrap();
            let back = g.eval(r).unwrap();
            assert!(
                (back - y).abs() <= 1e-12 * (1.0 + y.abs()),
                "{}: inverted {y} to {r}, forward gives {back}",
                g.describe()
            );
        }
        // Exact zeros invert to exactly zero.
        assert_eq!(inv.eval(0.0).unwrap(), 0.0);
    }
}

/// Composition is associative pointwise: `(f o g) o h = f o (g o h)`.
#[test]
fn composition_is_associative() {
    let f = gain("2 * r", ComparisonClass::ExtendedKInfty);
    let g = gain("r + 0.1 * r^3", ComparisonClass::ExtendedKInfty);
    let h = gain("0.5 * r", ComparisonClass::ExtendedKInfty);
    let left = GainFn::compose(&GainFn::compose(&f, &g), &h);
    let right = GainFn::compose(&f, &GainFn::compose(&g, &h));
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..1000 {
        let r = rng.gen_range(-5.0..5.0);
        let a = left.eval(r).unwrap();
        let b = right.eval(r).unwrap();
        assert!(
            (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
            "associativity broke at {r}: {a} vs {b}"
        );
    }
}

/// For linear cross-gains the small-gain test depends only on the slope
/// product, so rebalancing the pair by any factor changes nothing.
#[test]
fn small_gain_margin_is_invariant_under_rebalancing() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let s1: f64 = rng.gen_range(0.1..1.4);
        let s2: f64 = rng.gen_range(0.1..1.4);
        let k: f64 = rng.gen_range(0.25..4.0);
        let base = check_small_gain(
            &gain(&format!("{s1:?} * r"), ComparisonClass::ExtendedKInfty),
            &gain(&format!("{s2:?} * r"), ComparisonClass::ExtendedKInfty),
            DEFAULT_WINDOW_RADIUS,
            512,
        )
        .unwrap();
        let rebalanced = check_small_gain(
            &gain(&format!("{:?} * r", k * s1), ComparisonClass::ExtendedKInfty),
            &gain(&format!("{:?} * r", s2 / k), ComparisonClass::ExtendedKInfty),
            DEFAULT_WINDOW_RADIUS,
            512,
        )
        .unwrap();
        assert_eq!(base.satisfied, s1 * s2 < 1.0, "slopes {s1} {s2}");
        assert_eq!(base.satisfied, rebalanced.satisfied);
        assert!(
            (base.min_relative_gap - rebalanced.min_relative_gap).abs() <= 1e-9,
            "relative gap moved under rebalancing: {} vs {}",
            base.min_relative_gap,
            rebalanced.min_relative_gap
        );
        assert!((base.min_relative_gap - (1.0 - s1 * s2)).abs() <= 1e-9);
    }
}

/// The identity composed with itself sits exactly on the identity, which the
/// strict test must reject.
#[test]
fn identity_pair_fails_the_strict_test() {
    let id = GainFn::identity(DEFAULT_WINDOW_RADIUS);
    let report = check_small_gain(&id, &id, DEFAULT_WINDOW_RADIUS, DEFAULT_CERT_GRID).unwrap();
    assert!(!report.satisfied);
    assert!(report.min_gap.abs() <= 1e-12);
}
