use geoconvex::brascamp_lieb::{bl_objective, BlDatum};
use geoconvex::connection::{
    christoffel_closed, christoffel_numeric, curve_length, metric_frame_of, sample_geodesic, CurveTrace,
};
use geoconvex::gconvex::{midpoint_test, uniform_grid, ScalarField, Verdict, TOL_EQ};
use geoconvex::manifold::{distance, exp_map, geodesic_point, log_map, ManifoldSpec, Point};
use geoconvex::matfun::{spd_log, spd_power, sym_exp, SpdMatrix};
use geoconvex::operator_scaling::{log_capacity_eval, PositiveOperator};
use geoconvex::sampling::{gaussian_matrix, log_uniform, random_spd, random_symmetric, trial_rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    trial_rng(seed, 0)
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

fn orthant(rng: &mut ChaCha8Rng, n: usize) -> Point {
    let x: Vec<f64> = (0..n).map(|_| log_uniform(rng, 0.1, 10.0)).collect();
    Point::orthant(&x).unwrap()
}

fn any_point(rng: &mut ChaCha8Rng, which: u8, n: usize) -> Point {
    match which % 3 {
        0 => Point::euclidean(
            &(0..n)
                .map(|i| (i as f64 - 1.5) * log_uniform(rng, 0.1, 3.0))
                .collect::<Vec<_>>(),
        )
        .unwrap(),
        1 => orthant(rng, n),
        _ => Point::spd(random_spd(rng, n.min(3), 1.5)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn powers_add(seed in any::<u64>(), n in 1usize..=4, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let p = random_spd(&mut rng(seed), n, 1.5);
        let lhs = spd_power(&p, a).unwrap().as_matrix() * spd_power(&p, b).unwrap().as_matrix();
        let rhs = spd_power(&p, a + b).unwrap();
        prop_assert!(rel(&lhs, rhs.as_matrix()) < 1e-10);
    }

    #[test]
    fn exp_inverts_log(seed in any::<u64>(), n in 1usize..=5) {
        let p = random_spd(&mut rng(seed), n, 2.0);
        let back = sym_exp(&spd_log(&p)).unwrap();
        prop_assert!(rel(back.as_matrix(), p.as_matrix()) < 1e-12);
    }

    #[test]
    fn metric_axioms(seed in any::<u64>(), which in 0u8..3, n in 1usize..=3) {
        let mut r = rng(seed);
        let [a, b, c] = [0, 1, 2].map(|_| any_point(&mut r, which, n));
        let dab = distance(&a, &b).unwrap();
        prop_assert!(distance(&a, &a).unwrap().abs() < 1e-12);
        prop_assert!((dab - distance(&b, &a).unwrap()).abs() <= 1e-10 * (1.0 + dab));
        prop_assert!(dab <= distance(&a, &c).unwrap() + distance(&c, &b).unwrap() + 1e-10);
    }

    #[test]
    fn exp_and_log_are_inverse(seed in any::<u64>(), which in 0u8..3, n in 1usize..=3) {
        let mut r = rng(seed);
        let p = any_point(&mut r, which, n);
        let q = any_point(&mut r, which, n);
        let back = exp_map(&p, &log_map(&p, &q).unwrap(), 1.0).unwrap();
        let (x, y) = (back.to_frame(), q.to_frame());
        prop_assert!((&x - &y).amax() <= 1e-9 * (1.0 + y.amax()));
    }

    #[test]
    fn geodesic_reparametrization(seed in any::<u64>(), which in 0u8..3, s in 0.05f64..1.0, t in 0.0f64..1.0) {
        let mut r = rng(seed);
        let p = any_point(&mut r, which, 2);
        let q = any_point(&mut r, which, 2);
        let mid = geodesic_point(&p, &q, s).unwrap();
        let a = geodesic_point(&p, &mid, t).unwrap().to_frame();
        let b = geodesic_point(&p, &q, s * t).unwrap().to_frame();
        prop_assert!((&a - &b).amax() <= 1e-9 * (1.0 + b.amax()));
    }

    #[test]
    fn distance_is_geodesic_length(seed in any::<u64>(), which in 0u8..3) {
        let mut r = rng(seed);
        let p = any_point(&mut r, which, 2);
        let q = any_point(&mut r, which, 2);
        let len = curve_length(p.spec(), &sample_geodesic(&p, &q, 401).unwrap()).unwrap();
        let d = distance(&p, &q).unwrap();
        prop_assert!((len - d).abs() <= 1e-6 * (1.0 + d));
    }

    #[test]
    fn determinant_interpolates_geometrically(seed in any::<u64>(), n in 1usize..=5, t in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let p = Point::spd(random_spd(&mut r, n, 2.0));
        let q = Point::spd(random_spd(&mut r, n, 2.0));
        let g = geodesic_point(&p, &q, t).unwrap();
        let want = (1.0 - t) * p.as_spd().unwrap().log_det() + t * q.as_spd().unwrap().log_det();
        prop_assert!((g.as_spd().unwrap().as_matrix().determinant().ln() - want).abs() < 1e-9);
    }

    #[test]
    fn numeric_christoffel_matches_closed_form(seed in any::<u64>(), n in 1usize..=4) {
        let m = ManifoldSpec::orthant(n);
        let x: Vec<f64> = {
            let mut r = rng(seed);
            (0..n).map(|_| log_uniform(&mut r, 0.3, 5.0)).collect()
        };
        let p = Point::orthant(&x).unwrap();
        let num = christoffel_numeric(&metric_frame_of(m), &p.to_frame(), 1e-4).unwrap();
        prop_assert!(num.max_abs_diff(&christoffel_closed(m, &p).unwrap()) < 1e-5);
        prop_assert!(num.torsion_defect() == 0.0);
    }

    #[test]
    fn log_det_never_violates(seed in any::<u64>(), n in 1usize..=4) {
        let mut r = rng(seed);
        let p = Point::spd(random_spd(&mut r, n, 1.5));
        let q = Point::spd(random_spd(&mut r, n, 1.5));
        for f in [ScalarField::log_det(n), ScalarField::neg_log_det(n)] {
            let rep = midpoint_test(&f, &p, &q, &uniform_grid(17), TOL_EQ).unwrap();
            prop_assert_eq!(rep.verdict, Verdict::Consistent);
        }
    }

    #[test]
    fn bl_objective_is_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut r = rng(seed);
        // n = 2 with weights summing to 2 over rank-one maps.
        let maps: Vec<DMatrix<f64>> = (0..4).map(|_| gaussian_matrix(&mut r, 1, 2)).collect();
        let d = BlDatum::new(2, maps, vec![0.5; 4]).unwrap();
        let x = random_spd(&mut r, 2, 1.0);
        let cx = SpdMatrix::new(x.as_sym().scale(c)).unwrap();
        let (a, b) = (bl_objective(&d, &x).unwrap(), bl_objective(&d, &cx).unwrap());
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn capacity_objective_is_scale_invariant(seed in any::<u64>(), n in 1usize..=4, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let op = PositiveOperator::new((0..3).map(|_| gaussian_matrix(&mut r, n, n)).collect()).unwrap();
        let x = random_spd(&mut r, n, 1.0);
        let cx = SpdMatrix::new(x.as_sym().scale(c)).unwrap();
        let (a, b) = (log_capacity_eval(&op, &x).unwrap(), log_capacity_eval(&op, &cx).unwrap());
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn apply_and_adjoint_are_dual(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=4) {
        let mut r = rng(seed);
        let op = PositiveOperator::new((0..m).map(|_| gaussian_matrix(&mut r, n, n)).collect()).unwrap();
        let x = random_symmetric(&mut r, n, 1.0);
        let y = random_symmetric(&mut r, n, 1.0);
        let lhs = op.apply(&x).unwrap().frobenius_inner(&y);
        let rhs = x.frobenius_inner(&op.apply_adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn trace_csv_round_trips(seed in any::<u64>(), which in 0u8..3) {
        let mut r = rng(seed);
        let p = any_point(&mut r, which, 2);
        let q = any_point(&mut r, which, 2);
        let trace = sample_geodesic(&p, &q, 7).unwrap();
        prop_assert_eq!(CurveTrace::from_csv(&trace.to_csv()).unwrap(), trace);
    }
}
