use std::collections::BTreeMap;
use std::f64::consts::PI;

use proptest::prelude::*;

use mra_core::estimators::fd_derivative;
use mra_core::inversion::extend_even;
use mra_core::moments::{b_constants, b_residuals, DilationMoments, MomentSource};
use mra_core::signal_model::{FourierPlan, Grid};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_on_random_samples(v in prop::collection::vec(-10.0f64..10.0, 64)) {
        let grid = Grid::new(8.0, 3).unwrap();
        let plan = FourierPlan::new(&grid);
        let spatial: f64 = v.iter().map(|x| x * x).sum::<f64>() * grid.dx();
        let freq: f64 = plan.power(&v).iter().sum::<f64>() * grid.d_omega() / (2.0 * PI);
        prop_assert!((spatial - freq).abs() <= 1e-10 * spatial.max(1e-300));
    }

    #[test]
    fn even_extension_is_symmetric(g in prop::collection::vec(-3.0f64..3.0, 33)) {
        let grid = Grid::new(4.0, 4).unwrap();
        let p = extend_even(&grid, &g);
        for k in 1..grid.len() {
            prop_assert_eq!(p.values[k], p.values[grid.mirror(k).unwrap()]);
        }
        prop_assert!(p.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn b_recursion_on_random_moments(eta in 0.0f64..0.3, c4 in 1.0f64..5.0, c6 in 1.0f64..30.0) {
        let c: BTreeMap<usize, f64> = [(2, 1.0), (4, c4), (6, c6)].into_iter().collect();
        let m = DilationMoments::new(eta * eta, c, MomentSource::Oracle);
        let b = b_constants(&m, 6).unwrap();
        prop_assert!(b_residuals(&m, &b).unwrap().iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn stencils_reproduce_cubics(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0) {
        let h = 0.1;
        let x: Vec<f64> = (0..20).map(|i| i as f64 * h).collect();
        let f: Vec<f64> = x.iter().map(|t| a + b * t + c * t * t + d * t * t * t).collect();
        let (d1, m1) = fd_derivative(&f, h, 1).unwrap();
        let (d2, _) = fd_derivative(&f, h, 2).unwrap();
        let (d3, _) = fd_derivative(&f, h, 3).unwrap();
        for i in (0..20).filter(|&i| m1[i]) {
            let t = x[i];
            prop_assert!((d1[i] - (b + 2.0 * c * t + 3.0 * d * t * t)).abs() < 1e-9);
            prop_assert!((d2[i] - (2.0 * c + 6.0 * d * t)).abs() < 1e-8);
            prop_assert!((d3[i] - 6.0 * d).abs() < 1e-7);
        }
    }
}
