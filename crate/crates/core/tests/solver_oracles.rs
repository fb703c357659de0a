use inicon::assembly::{assemble, inward_neighbor, CarlemanParams, ConstraintWeight};
use inicon::basis::TimeBasis;
use inicon::forward::CauchyRecord;
use inicon::grid::{lineup, SpatialGrid};
use inicon::sparsela::{lsq_solve, normal_residual, CsrMatrix, LsqOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn qr_solve(a: &CsrMatrix, b: &[f64]) -> DVector<f64> {
    let dense = DMatrix::from_row_slice(a.rows(), a.cols(), &a.to_dense().concat());
    let qr = dense.qr();
    let qtb = qr.q().transpose() * DVector::from_column_slice(b);
    qr.r().solve_upper_triangular(&qtb).expect("full column rank")
}

fn rel_err(x: &[f64], reference: &DVector<f64>) -> f64 {
    x.iter().zip(reference.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / reference.norm()
}

#[test]
fn random_overdetermined_system_matches_dense_qr() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..5 {
        let mut trip = vec![];
        for r in 0..50 {
            for c in 0..20 {
                if rng.gen_bool(0.4) || r == c {
                    trip.push((r, c, rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-2..3))));
                }
            }
        }
        let a = CsrMatrix::from_triplets(50, 20, &trip).unwrap();
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = lsq_solve(&a, &b, None, &LsqOptions { tol: 1e-14, max_iter: 2000, record_history: false }).unwrap();
        let x_ref = qr_solve(&a, &b);
        assert!(rel_err(&sol.x, &x_ref) <= 1e-8, "{}", rel_err(&sol.x, &x_ref));
    }
}

/// Cauchy data, source and exact coefficients of a small system that the
/// exact solution satisfies to round-off.
fn consistent(omega: ConstraintWeight) -> (inicon::assembly::EllipticSystem, Vec<f64>) {
    let (n, modes) = (6, 2);
    let grid = SpatialGrid::new(1.0, n).unwrap();
    let basis = TimeBasis::build(1.5, modes, 257).unwrap();
    let xs = grid.coords();
    let at = |i, j, m| lineup(i, j, m, n, modes).unwrap() - 1;
    let mut ustar = vec![0.0; n * n * modes];
    for i in 1..=n {
        for j in 1..=n {
            for m in 1..=modes {
                ustar[at(i, j, m)] = (xs[i - 1] + 2.0 * xs[j - 1] * m as f64).sin();
            }
        }
    }
    let nodes = grid.boundary_nodes();
    let f = nodes.iter().map(|&(i, j)| (1..=modes).map(|m| ustar[at(i, j, m)]).collect()).collect();
    let g = nodes
        .iter()
        .map(|&(i, j)| {
            let (ii, jj) = inward_neighbor(n, i, j);
            (1..=modes).map(|m| (ustar[at(i, j, m)] - ustar[at(ii, jj, m)]) / grid.step()).collect()
        })
        .collect();
    let c = vec![1.0; n * n];
    let sys = assemble(&grid, &c, &basis.stiffness(), &CarlemanParams::default(), omega, &CauchyRecord { nodes, f, g }).unwrap();
    (sys, ustar)
}

#[test]
fn constraint_weight_does_not_move_a_consistent_minimizer() {
    let opts = LsqOptions { tol: 1e-14, max_iter: 20_000, record_history: false };
    for value in [1.0, 100.0, 1e4] {
        let (sys, ustar) = consistent(ConstraintWeight::Absolute { value });
        let au = sys.matrix.spmv(&ustar).unwrap();
        let mut b = sys.rhs.clone();
        b[sys.pde_rows.clone()].copy_from_slice(&au[sys.pde_rows.clone()]);
        let sol = lsq_solve(&sys.operator, &b, None, &opts).unwrap();
        let scale = ustar.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, u) in sol.x.iter().zip(&ustar) {
            assert!((x - u).abs() < 1e-7 * scale, "omega = {value}: {x} vs {u}");
        }
    }
}

#[test]
fn stacked_systems_match_dense_qr_through_both_operators() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = LsqOptions { tol: 1e-15, max_iter: 20_000, record_history: false };
    for _ in 0..5 {
        let (sys, _) = consistent(ConstraintWeight::default());
        let b: Vec<f64> = (0..sys.matrix.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x_ref = qr_solve(&sys.matrix, &b);
        let by_matrix = lsq_solve(&sys.matrix, &b, None, &opts).unwrap();
        let by_stencil = lsq_solve(&sys.operator, &b, None, &opts).unwrap();
        assert!(rel_err(&by_matrix.x, &x_ref) <= 1e-8);
        assert!(rel_err(&by_stencil.x, &x_ref) <= 1e-8);
        assert!(normal_residual(&sys.matrix, &b, &by_stencil.x).unwrap() <= 1e-6 * normal_residual(&sys.matrix, &b, &vec![0.0; sys.matrix.cols()]).unwrap());
    }
}
