//! Seed streams and schedule independence.

use std::collections::HashSet;

use homlab_core::seed::{derive_seed, rng};
use homlab_core::{par, EnsembleSpec, TorusLattice};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn neighbouring_indices_never_collide() {
    let mut r = rng(99);
    for _ in 0..1_000_000 {
        let s: u64 = r.random();
        assert_ne!(derive_seed(s, 0), derive_seed(s, 1));
    }
    let seen: HashSet<u64> = (0..100_000).map(|i| derive_seed(7, i)).collect();
    assert_eq!(seen.len(), 100_000);
}

#[test]
fn low_bits_are_equidistributed() {
    let n = 1 << 18;
    let mut counts = [0usize; 256];
    for i in 0..n {
        counts[(derive_seed(12345, i) & 0xff) as usize] += 1;
    }
    let expected = n as f64 / 256.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 255 degrees of freedom; the 99.9% quantile is about 330
    assert!(chi2 < 330.0, "chi2 = {chi2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parallel_reductions_match_sequential(xs in proptest::collection::vec(-1e3f64..1e3, 0..40_000)) {
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        prop_assert_eq!(par::dot(&xs, &ys).to_bits(), par::dot_seq(&xs, &ys).to_bits());
        let mapped = par::map_indexed(xs.len(), |i| xs[i] * 2.0);
        prop_assert_eq!(mapped, par::map_indexed_seq(xs.len(), |i| xs[i] * 2.0));
    }
}

#[cfg(feature = "parallel")]
#[test]
fn reports_do_not_depend_on_worker_count() {
    use homlab_core::estimators::{estimate_moment, MonteCarlo};
    use homlab_core::{DirectionVector, SolverConfig};

    let mc = MonteCarlo {
        spec: EnsembleSpec::modified_bernoulli(0.6),
        dim: 3,
        side: 8,
        samples: 6,
        master_seed: 31,
        solver: SolverConfig::default(),
    };
    let e = DirectionVector::axis(3, 1).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| estimate_moment(&mc, 16.0, 2.0, &e).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one.estimate.to_bits(), run(2).estimate.to_bits());
}

#[test]
fn identical_seeds_identical_fields() {
    let lat = TorusLattice::new(3, 6).unwrap();
    let spec = EnsembleSpec::IidUniform { lo: 0.2, hi: 0.9 };
    assert_eq!(spec.sample(&lat, 5).unwrap(), spec.sample(&lat, 5).unwrap());
    assert_ne!(spec.sample(&lat, 5).unwrap(), spec.sample(&lat, 6).unwrap());
}
