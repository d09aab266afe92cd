//! Inequality constants against brute-force sums and scans, and random
//! trials of the Leibniz-type and coercivity inequalities.

use approx::assert_relative_eq;
use homlab_core::inequalities::{
    coercivity_check, coercivity_constant, coercivity_prob_constant, constant_oracle, constant_oracle_with_grid,
    product_ratio, trial_environment, trial_function, LeibnizRatio,
};
use homlab_core::TorusLattice;
use proptest::prelude::*;

#[test]
fn coercivity_constant_brackets_explicit_lattice_sum() {
    let (p, r) = (5.0, 40i64);
    let mut partial = 0.0;
    for x in -r..=r {
        for y in -r..=r {
            for z in -r..=r {
                let n = x.abs().max(y.abs()).max(z.abs()) as f64;
                partial += (n + 1.0).powf(1.0 - p);
            }
        }
    }
    // each shell of radius s > r has fewer than 26 s^2 + 2 sites
    let n = 200_000i64;
    let tail: f64 = (r + 1..=n).map(|s| (26.0 * (s * s) as f64 + 2.0) * ((s + 1) as f64).powf(1.0 - p)).sum::<f64>()
        + 28.0 / n as f64;
    let c = coercivity_constant(p, 3).unwrap();
    assert!(c.value >= partial && c.value <= partial + tail, "{c:?} vs [{partial}, {}]", partial + tail);
    assert!(c.upper >= c.value && c.upper - c.value < 1e-10);
}

#[test]
fn coercivity_prob_constant_matches_direct_sum() {
    let direct: f64 = (0..200).map(|k| 2f64.powf(-4.0 * k as f64) * (2f64.powi(k + 2) + 1.0).powi(3)).sum();
    let c = coercivity_prob_constant(5.0, 3).unwrap();
    assert_relative_eq!(c.value, direct, max_relative = 1e-14);
    assert!(coercivity_prob_constant(4.0, 3).is_err());
    assert!(coercivity_constant(4.0, 3).is_err());
}

#[test]
fn product_constant_limits() {
    for p in [1u32, 2, 4] {
        let limit = ((p + 1) * (p + 1)) as f64 / (2 * p + 1) as f64;
        assert_relative_eq!(product_ratio(p, 1.0 - 1e-7), limit, max_relative = 1e-6);
        assert_eq!(product_ratio(p, 0.0), 1.0);
        let c = constant_oracle(p).unwrap();
        assert!(c.product >= limit - 1e-12 && c.product >= 1.0);
    }
    assert_relative_eq!(constant_oracle(2).unwrap().product, 9.0 / 5.0, max_relative = 1e-9);
}

#[test]
fn oracle_is_stable_under_refinement() {
    for p in [1u32, 2, 4] {
        let coarse = constant_oracle_with_grid(p, 1 << 15).unwrap();
        let fine = constant_oracle_with_grid(p, 1 << 16).unwrap();
        for r in [
            LeibnizRatio::Comparability,
            LeibnizRatio::Product,
            LeibnizRatio::CorollaryUpper,
            LeibnizRatio::CorollaryLower,
        ] {
            if let (Some(a), Some(b)) = (coarse.for_ratio(r), fine.for_ratio(r)) {
                assert!((a - b).abs() < 1e-6, "p={p} {r:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn sign_mixed_example() {
    // p = 2, F(x) = -1, F(y) = 1: |grad F^3|^2 = 4 and grad F grad F^5 = 4
    assert_relative_eq!(LeibnizRatio::Product.eval(2, -1.0, 1.0).unwrap(), 1.0);
    assert_eq!(LeibnizRatio::Product.eval(2, 0.0, 0.0), None);
}

fn pair() -> impl Strategy<Value = (f64, f64)> {
    let magnitude = prop_oneof![
        Just(0.0),
        Just(1.0),
        Just(-1.0),
        (-6.0f64..6.0, any::<bool>()).prop_map(|(e, s)| {
            let m = 10f64.powf(e);
            if s {
                m
            } else {
                -m
            }
        })
    ];
    (magnitude.clone(), magnitude)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn leibniz_ratios_within_oracle_constants((fx, fy) in pair(), p in prop::sample::select(vec![1u32, 2, 4])) {
        let c = constant_oracle(p).unwrap();
        for r in [LeibnizRatio::Comparability, LeibnizRatio::Product, LeibnizRatio::CorollaryUpper, LeibnizRatio::CorollaryLower] {
            if let (Some(k), Some(v)) = (c.for_ratio(r), r.eval(p, fx, fy)) {
                prop_assert!(v <= k + 1e-9 * k.max(1.0), "{r:?} p={p} ({fx}, {fy}): {v} > {k}");
            }
        }
        if let (Some(lo), Some(v)) = (c.comparability_lower, LeibnizRatio::Comparability.eval(p, fx, fy)) {
            prop_assert!(v >= lo * (1.0 - 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coercivity_holds_on_random_pairs(seed in any::<u64>(), i in 0u64..64) {
        let lat = TorusLattice::new(2, 6).unwrap();
        let a = trial_environment(&lat, seed, i).unwrap();
        let u = trial_function(&lat, seed, i).unwrap();
        let r = coercivity_check(&lat, &a, &u, 4.0).unwrap();
        prop_assert!(r.passed, "{r:?}");
    }
}
