use std::f64::consts::FRAC_PI_2;

use angval::geometry::Frame;
use angval::random::{
    birkhoff_outer, inner_estimate, random_angular_values, CocycleDriver, DriverKind, TorusFamily,
};
use angval::trajectory::{EstimatorConfig, SearchStrategy};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config(ladder: Vec<usize>, search: SearchStrategy) -> EstimatorConfig {
    EstimatorConfig { s: 1, n_ladder: ladder, k_window: 10, search, refine: false, ..EstimatorConfig::default() }
}

fn drivers() -> impl Strategy<Value = CocycleDriver> {
    let iid = (0.0f64..FRAC_PI_2, 0.0f64..1.0).prop_map(|(lo, w)| DriverKind::IidAngles { lo, hi: lo + w * (FRAC_PI_2 - lo) });
    let finite = (prop::collection::vec(prop::array::uniform4(-2.0f64..2.0), 1..=3), 0.1f64..1.0).prop_filter_map(
        "singular matrix",
        |(ms, p)| {
            if ms.iter().any(|m| (m[0] * m[3] - m[1] * m[2]).abs() < 0.05) {
                return None;
            }
            let k = ms.len();
            let mut probabilities: Vec<f64> = (0..k).map(|i| if i == 0 { p } else { 1.0 }).collect();
            let total: f64 = probabilities.iter().sum();
            probabilities.iter_mut().for_each(|x| *x /= total);
            let matrices = ms.iter().map(|m| vec![vec![m[0], m[1]], vec![m[2], m[3]]]).collect();
            Some(DriverKind::IidFiniteSet { matrices, probabilities })
        },
    );
    let torus = (0.05f64..1.5, 0.0f64..0.3, 0.1f64..0.9)
        .prop_map(|(base, amp, alpha)| DriverKind::TorusRotation { alpha, family: TorusFamily::Rotation { base, amp } });
    (prop_oneof![iid, finite, torus], any::<u64>()).prop_map(|(kind, seed)| CocycleDriver::new(kind, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, rng_seed: RngSeed::Fixed(5), ..ProptestConfig::default() })]

    #[test]
    fn estimates_are_reproducible(driver in drivers()) {
        let cfg = config(vec![30, 60, 120], SearchStrategy::AngleGrid(24));
        let a = random_angular_values(&driver, &cfg, 4).unwrap();
        let b = random_angular_values(&driver, &cfg, 4).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn random_comparison_diagram_holds(driver in drivers()) {
        let cfg = config(vec![30, 60, 120], SearchStrategy::AngleGrid(24));
        let est = random_angular_values(&driver, &cfg, 6).unwrap();
        let bad = est.ordering_violations(1e-12);
        prop_assert!(bad.is_empty(), "{bad:?}");
    }

    #[test]
    fn iid_rotations_do_not_depend_on_the_line(lo in 0.0f64..FRAC_PI_2, w in 0.0f64..1.0, seed in any::<u64>(), t in 0.0f64..3.0) {
        let driver = CocycleDriver::new(DriverKind::IidAngles { lo, hi: lo + w * (FRAC_PI_2 - lo) }, seed).unwrap();
        let n = 500;
        let outer = birkhoff_outer(&driver, &Frame::line(&[t.cos(), t.sin()]).unwrap(), n, 8).unwrap();
        let inner = inner_estimate(&driver, &config(vec![n], SearchStrategy::AngleGrid(36)), 8).unwrap();
        prop_assert!((outer.value - inner.estimate.value).abs() <= 1e-12, "{} vs {}", outer.value, inner.estimate.value);
    }
}

#[test]
fn torus_averages_concentrate_along_the_ladder() {
    let kind = DriverKind::TorusRotation {
        alpha: angval::random::GOLDEN_ALPHA,
        family: TorusFamily::Rotation { base: 0.6, amp: 0.2 },
    };
    let driver = CocycleDriver::new(kind, 9).unwrap();
    let cfg = config(vec![100, 1000, 10_000, 100_000], SearchStrategy::AngleGrid(4));
    let est = inner_estimate(&driver, &cfg, 32).unwrap();
    let spreads: Vec<f64> = est.trace.iter().map(|t| t.spread).collect();
    assert!(spreads.windows(2).all(|w| w[1] < w[0]), "{spreads:?}");
    assert!((est.estimate.value - 0.6).abs() < 1e-3);
}
