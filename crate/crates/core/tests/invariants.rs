use inicon::assembly::{carleman_weight, cutoff, CarlemanParams};
use inicon::basis::TimeBasis;
use inicon::carleman::{check, lambda_sweep, TestFunction};
use inicon::forward::CauchyRecord;
use inicon::sparsela::{lsq_solve, CsrMatrix, LsqOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_grows_along_rays(angle in 0.0f64..std::f64::consts::TAU, r1 in 0.01f64..3.0, dr in 0.01f64..2.0, lambda in 1.0f64..60.0, beta in 1.0f64..12.0) {
        let p = CarlemanParams { lambda, beta, b: 5.0, x0: [0.0, 1.5] };
        let at = |r: f64| carleman_weight(p.x0[0] + r * angle.cos(), p.x0[1] + r * angle.sin(), &p);
        prop_assert!(at(r1 + dr) >= at(r1));
        prop_assert!(at(r1) >= 1.0);
    }

    #[test]
    fn cutoff_saturates(s in -1e3f64..1e3, bound in 1e-3f64..1e2) {
        let v = cutoff(s, bound);
        prop_assert!(v.abs() <= bound);
        prop_assert_eq!(cutoff(-s, bound), -v);
        if s.abs() <= bound {
            prop_assert_eq!(v, s);
        }
    }

    #[test]
    fn projection_inverts_synthesis(seed in 0u64..1000, modes in 1usize..25) {
        let basis = TimeBasis::build(1.5, modes, 1025).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..modes).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let back = basis.project(&basis.synthesize(&c)).unwrap();
        for (a, b) in back.iter().zip(&c) {
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn cgls_residual_never_grows(seed in 0u64..1000, rows in 5usize..40, cols in 1usize..20) {
        prop_assume!(rows >= cols);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip: Vec<(usize, usize, f64)> = (0..cols).map(|c| (c, c, rng.gen_range(0.5..2.0))).collect();
        for _ in 0..rows * 3 {
            trip.push((rng.gen_range(0..rows), rng.gen_range(0..cols), rng.gen_range(-1.0..1.0)));
        }
        let a = CsrMatrix::from_triplets(rows, cols, &trip).unwrap();
        let b: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = lsq_solve(&a, &b, None, &LsqOptions { tol: 1e-12, max_iter: 200, record_history: true }).unwrap();
        for w in sol.history.windows(2) {
            prop_assert!(w[1].0 <= w[0].0 * (1.0 + 1e-12), "{:?}", sol.history);
        }
    }

    #[test]
    fn noise_is_reproducible_and_relative(seed in 0u64..1000, delta in 0.0f64..0.5) {
        let rec = CauchyRecord { nodes: vec![(1, 1), (1, 2)], f: vec![vec![1.0, -2.0], vec![0.5, 0.0]], g: vec![vec![3.0, 1.0], vec![-1.0, 2.0]] };
        let a = rec.with_noise(delta, seed).unwrap();
        prop_assert_eq!(&a, &rec.with_noise(delta, seed).unwrap());
        for (x, y) in rec.f.iter().chain(&rec.g).flatten().zip(a.f.iter().chain(&a.g).flatten()) {
            prop_assert!((y - x).abs() <= delta * x.abs() + 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn carleman_ratio_ignores_amplitude(scale in 0.01f64..100.0, k in 0.0f64..4.0) {
        let p = CarlemanParams::default();
        let lambdas = lambda_sweep(40.0, 400.0, 4).unwrap();
        let v = if k < 0.5 { TestFunction::Polynomial { a: 1.0 } } else { TestFunction::Cosine { a: 1.0, k } };
        let r1 = check(&v, &p, 1.0, &lambdas, 401).unwrap();
        let r2 = check(&v.scaled(scale), &p, 1.0, &lambdas, 401).unwrap();
        for (a, b) in r1.rows.iter().zip(&r2.rows) {
            prop_assert!(a.c_hat > 0.0);
            prop_assert!((a.c_hat - b.c_hat).abs() <= 1e-12 * a.c_hat);
        }
    }
}
