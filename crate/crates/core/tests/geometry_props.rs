use std::f64::consts::PI;

use angval::geometry::{
    condition_number, line_angle, max_angle, minmax_angle_oracle, minmax_oracle_resolution, principal_angles, Frame,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=6).prop_flat_map(|d| (Just(d), 1..=d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn principal_angles_are_symmetric((d, s) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Frame::random(d, s, &mut rng);
        let q = Frame::random(d, s, &mut rng);
        let a = principal_angles(&p, &q).unwrap().angles;
        let b = principal_angles(&q, &p).unwrap().angles;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn perturbation_of_a_longer_vector(d in 2usize..=6, seed in any::<u64>(), ratio in 0.01f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = gaussian(&mut rng, d, 1);
        let mut v = gaussian(&mut rng, d, 1);
        v *= ratio * w.norm() / v.norm();
        let (nv2, nw2) = (v.norm_squared(), w.norm_squared());
        let sum = &v + &w;
        let ang = line_angle(sum.as_slice(), w.as_slice());
        let tan_bound = nv2 / (nw2 - nv2);
        let cos_bound = (nw2 - nv2) / nw2;
        prop_assert!(ang.tan().powi(2) <= tan_bound * (1.0 + 1e-12));
        prop_assert!(ang.cos().powi(2) >= cos_bound * (1.0 - 1e-12));
    }

    #[test]
    fn linear_maps_distort_angles_boundedly((d, s) in (2usize..=4).prop_flat_map(|d| (Just(d), 1..d)), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sm = gaussian(&mut rng, d, d);
        let kappa = condition_number(&sm);
        prop_assume!(kappa.is_finite() && kappa < 1e6);
        let v = Frame::random(d, s, &mut rng);
        let w = Frame::random(d, s, &mut rng);
        let sv = Frame::new(&(&sm * v.matrix())).unwrap();
        let sw = Frame::new(&(&sm * w.matrix())).unwrap();
        let lhs = max_angle(&sv, &sw).unwrap();
        let rhs = PI * kappa * (1.0 + kappa) * max_angle(&v, &w).unwrap();
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn angles_invariant_under_scaled_rotations(
        (d, s) in dims(),
        seed in any::<u64>(),
        r in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Frame::random(d, d, &mut rng).into_matrix();
        let v = Frame::random(d, s, &mut rng);
        let w = Frame::random(d, s, &mut rng);
        let tv = Frame::new(&(&q * v.matrix() * r)).unwrap();
        let tw = Frame::new(&(&q * w.matrix() * r)).unwrap();
        let a = principal_angles(&v, &w).unwrap().angles;
        let b = principal_angles(&tv, &tw).unwrap().angles;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }
}

#[test]
fn oracle_error_shrinks_with_the_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let p = Frame::random(4, 2, &mut rng);
        let q = Frame::random(4, 2, &mut rng);
        let exact = max_angle(&p, &q).unwrap();
        let mut last_res = f64::INFINITY;
        for grid in [25, 50, 100, 200, 400, 800] {
            let res = minmax_oracle_resolution(2, grid);
            assert!(res < last_res);
            last_res = res;
            let brute = minmax_angle_oracle(&p, &q, grid).unwrap();
            assert!((brute - exact).abs() <= res, "grid {grid}: {brute} vs {exact}");
        }
    }
}
