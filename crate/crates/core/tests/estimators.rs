//! Invariants of the Monte Carlo estimators on small lattices.

use homlab_core::estimators::{
    default_side, estimate_ahom, estimate_moment, finite_size, green_decay_profile, neighbor_distance_moments,
    spectral_gap_check, DecaySource, MonteCarlo,
};
use homlab_core::io::{read_binary, write_binary, FieldKind};
use homlab_core::{ConductanceField, DirectionVector, EnsembleSpec, SolverConfig, TorusLattice, Verdict};
use proptest::prelude::*;

fn mc(spec: EnsembleSpec, side: usize, samples: usize) -> MonteCarlo {
    MonteCarlo { spec, dim: 3, side, samples, master_seed: 3, solver: SolverConfig::default() }
}

#[test]
fn moments_vanish_without_randomness() {
    let e = DirectionVector::normalized(vec![0.3, 1.0, -0.2]).unwrap();
    for spec in [EnsembleSpec::modified_bernoulli(1.0), EnsembleSpec::Deterministic { value: 0.4 }] {
        for p in [1.0, 2.0, 4.0] {
            let r = estimate_moment(&mc(spec.clone(), 6, 2), 8.0, p, &e).unwrap();
            assert_eq!(r.estimate, 0.0);
        }
    }
}

#[test]
fn ahom_below_arithmetic_mean() {
    let e = DirectionVector::normalized(vec![1.0, 1.0, 0.0]).unwrap();
    for spec in [
        EnsembleSpec::modified_bernoulli(0.5),
        EnsembleSpec::IidUniform { lo: 0.0, hi: 1.0 },
        EnsembleSpec::IidBernoulli { lambda: 0.8 },
    ] {
        let r = estimate_ahom(&mc(spec, 8, 4), 32.0, &e).unwrap();
        assert!(r.estimate >= 0.0 && r.estimate <= r.upper_bound, "{r:?}");
    }
    let r =
        estimate_ahom(&mc(EnsembleSpec::modified_bernoulli(0.5), 8, 2), 32.0, &DirectionVector::axis(3, 0).unwrap())
            .unwrap();
    assert!(r.estimate <= 1.0 + 1e-12 && (r.upper_bound - 1.0).abs() < 1e-15);
}

#[test]
fn spectral_gap_with_quadrature_law() {
    let r = spectral_gap_check(
        &mc(EnsembleSpec::IidUniform { lo: 0.0, hi: 1.0 }, 3, 6),
        4.0,
        &DirectionVector::axis(3, 2).unwrap(),
    )
    .unwrap();
    assert!(r.check.passed(), "{r:?}");
    assert!(r.variance > 0.0);
}

#[test]
fn unit_field_green_decay_rate() {
    let lat = TorusLattice::new(3, 32).unwrap();
    let ones = ConductanceField::constant(&lat, 1.0).unwrap();
    let r =
        green_decay_profile(&DecaySource::Fixed(ones), 3, 32, 256.0, 1.5, 2.0, 2, &SolverConfig::default()).unwrap();
    assert!((r.slope + 2.0).abs() < 0.4, "{r:?}");
    assert_eq!(r.p_star, 3.0);
    assert_eq!(r.beta, 7.0);
    assert_eq!(r.q, 3.0);
    assert!(r.shell_constants.iter().all(|&c| c == 1.0));
}

#[test]
fn neighbor_distance_is_three_at_full_percolation() {
    let r = neighbor_distance_moments(1.0, 3.0, 2, 3, 12, 20, 8).unwrap();
    assert_eq!(r.estimate, 27.0);
    assert_eq!(r.wrapped, 0);
    assert_eq!(r.check.verdict, Verdict::Pass);
}

#[test]
fn torus_size_flag() {
    assert!(!finite_size(256.0, 64));
    assert!(finite_size(4096.0, 128));
    for t in [4.0, 16.0, 64.0, 256.0, 1024.0] {
        assert!(!finite_size(t, default_side(t)), "T={t}");
    }
    let e = DirectionVector::axis(3, 0).unwrap();
    let r = estimate_moment(&mc(EnsembleSpec::modified_bernoulli(0.5), 6, 2), 16.0, 2.0, &e).unwrap();
    assert!(r.finite_size);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn binary_fields_round_trip(d in 2usize..=3, l in 2usize..=5, seed in any::<u64>()) {
        let lat = TorusLattice::new(d, l).unwrap();
        let a = EnsembleSpec::IidUniform { lo: 0.0, hi: 1.0 }.sample(&lat, seed).unwrap();
        let mut buf = Vec::new();
        write_binary(&mut buf, a.shape(), a.values()).unwrap();
        let (shape, values) = read_binary(buf.as_slice(), FieldKind::Bonds).unwrap();
        prop_assert_eq!(shape, lat.shape());
        prop_assert_eq!(values, a.values().to_vec());
    }
}
