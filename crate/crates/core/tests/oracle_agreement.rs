use covlab::boman::{overlap_norm, Realization, SearchMode};
use covlab::maximal::{maximal_function, OperatorSpec, TestFunction};
use covlab::oracle::{
    brute_boman_constant, brute_maximal, exact_overlap, random_family, random_space, theorem_consistency_suite, OracleBudget,
};
use covlab::space::{Closure, MetricMeasureSpace};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = OperatorSpec> {
    (any::<bool>(), any::<bool>(), prop::sample::select(vec![0.0, 0.5, 1.0, 3.0]), prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]))
        .prop_map(|(centered, open, r_min, t)| {
            let mut spec = if centered { OperatorSpec::centered() } else { OperatorSpec::uncentered() };
            spec.closure = if open { Closure::Open } else { Closure::Closed };
            spec.with_r_min(r_min).with_expansion(t)
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fast_maximal_matches_enumeration(seed in any::<u64>(), n in 1usize..=8, spec in spec_strategy(), vals in prop::collection::vec(0.0f64..4.0, 8)) {
        let space = random_space(seed, n).unwrap();
        let g = TestFunction::new(vals[..space.len()].to_vec()).unwrap();
        let fast = maximal_function(&space, &g, &spec).unwrap();
        let slow = brute_maximal(&space, &g, &spec, &OracleBudget::default()).unwrap();
        for (a, b) in fast.values().iter().zip(slow.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "fast {a} brute {b}");
        }
    }

    #[test]
    fn overlap_norm_matches_compensated_sum(seed in any::<u64>(), n in 1usize..=10, size in 1usize..=6, p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0, f64::INFINITY])) {
        let space = random_space(seed, n).unwrap();
        let family = random_family(&space, seed, size, 4.0).unwrap();
        let mms: MetricMeasureSpace = space.into();
        for r in [Realization::Base, Realization::Dilated] {
            let fast = overlap_norm(&mms, &family, r, p).unwrap();
            let slow = exact_overlap(&mms, &family, r, p, &OracleBudget::default()).unwrap();
            prop_assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0));
        }
    }
}

#[test]
fn oracle_brackets_are_ordered() {
    let budget = OracleBudget::default();
    for seed in 0..4 {
        let space = random_space(seed, 5).unwrap();
        for mode in [SearchMode::Expand, SearchMode::Generalized, SearchMode::WeakContract] {
            let b = brute_boman_constant(&space, 2.0, mode, &budget).unwrap();
            assert!(b.lower >= 1.0 - 1e-12 && b.lower <= b.upper, "{mode:?} {b:?}");
        }
    }
}

#[test]
fn consistency_on_random_spaces() {
    let budget = OracleBudget::default();
    for seed in 0..3 {
        let space = random_space(100 + seed, 8).unwrap();
        let t = std::time::Instant::now();
        let report = theorem_consistency_suite(&space, 2.0, &budget).unwrap();
        eprintln!("seed {seed}: {:?} margin {}", t.elapsed(), report.weak_margin);
        assert!(report.passed(), "{:?}", report.violations);
    }
}
