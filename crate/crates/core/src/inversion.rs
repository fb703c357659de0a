//! The fixed-point iteration: a linear solve with zero nonlinear load, then
//! repeated solves with the load recomputed from the previous iterate, and
//! the reconstruction `p(x) = Σ_n u_n(x) Ψ_n(0)`.

use serde::{Deserialize, Serialize};

use crate::assembly::{carleman_weight, nonlinear_load, CarlemanParams, EllipticSystem};
use crate::basis::TimeBasis;
use crate::error::{Error, Result};
use crate::grid::{unknown, SpatialGrid};
use crate::scenario::{Nonlinearity, Scenario};
use crate::sparsela::{lsq_solve, LsqOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Nonlinear iterations after the initial solve.
    pub iterations: usize,
    /// Stop once the recursive error drops below `1e-6 ||p^(1)||_inf`.
    pub early_stop: bool,
    /// Start each nonlinear solve from the previous iterate instead of zero.
    pub warm_start: bool,
    /// Cutoff bound `M`; coefficients are clamped at `±M √T`.
    pub cutoff_bound: f64,
}

impl Default for InversionSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000, iterations: 5, early_stop: false, warm_start: false, cutoff_bound: 1e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub k: usize,
    /// Coefficients in line-up order.
    pub u: Vec<f64>,
    /// `p` at every grid node, [`SpatialGrid::node_offset`] order.
    pub p: Vec<f64>,
    /// `||p^(k) - p^(k-1)||_inf`; `None` for `k = 0`.
    pub recursive_error: Option<f64>,
    pub solve: SolveStats,
}

/// `p(x_i, y_j) = Σ_n u_n(x_i, y_j) Ψ_n(0)` at every node.
pub fn reconstruct(u: &[f64], psi0: &[f64], nx: usize) -> Vec<f64> {
    let modes = psi0.len();
    debug_assert_eq!(u.len(), nx * nx * modes);
    u.chunks_exact(modes).map(|c| c.iter().zip(psi0).map(|(a, b)| a * b).sum()).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Drives the solves against one assembled system.
pub struct Inverter<'a> {
    pub system: &'a EllipticSystem,
    pub basis: &'a TimeBasis,
    pub q: &'a Nonlinearity,
    pub settings: InversionSettings,
    /// Extra PDE right-hand side added to `-load` (zero for measured data).
    pub source: Option<Vec<f64>>,
    psi0: Vec<f64>,
}

impl<'a> Inverter<'a> {
    pub fn new(system: &'a EllipticSystem, basis: &'a TimeBasis, q: &'a Nonlinearity, settings: InversionSettings) -> Result<Self> {
        if basis.modes() != system.modes {
            return Err(Error::DimensionMismatch { expected: system.modes, got: basis.modes() });
        }
        if !(settings.tol > 0.0) || settings.max_iter == 0 {
            return Err(Error::invalid("solver tolerance and iteration cap must be positive"));
        }
        Ok(Self { system, basis, q, settings, source: None, psi0: basis.at_start() })
    }

    pub fn with_source(mut self, source: Vec<f64>) -> Result<Self> {
        if source.len() != self.system.pde_rows.len() {
            return Err(Error::DimensionMismatch { expected: self.system.pde_rows.len(), got: source.len() });
        }
        self.source = Some(source);
        Ok(self)
    }

    pub fn psi0(&self) -> &[f64] {
        &self.psi0
    }

    fn solve(&self, load: &[f64], x0: Option<&[f64]>, k: usize, prev_p: Option<&[f64]>) -> Result<IterationState> {
        let mut rhs = self.system.rhs_with_load(load)?;
        if let Some(src) = &self.source {
            rhs[self.system.pde_rows.clone()].iter_mut().zip(src).for_each(|(b, s)| *b += s);
        }
        let opts = LsqOptions { tol: self.settings.tol, max_iter: self.settings.max_iter, record_history: false };
        let sol = lsq_solve(&self.system.operator, &rhs, x0, &opts)?;
        let p = reconstruct(&sol.x, &self.psi0, self.system.nx);
        let recursive_error = prev_p.map(|q| sup_diff(&p, q));
        if let Some(e) = recursive_error {
            if !e.is_finite() {
                return Err(Error::NonFinite { what: "recursive error", i: 0, j: 0 });
            }
        }
        Ok(IterationState {
            k,
            u: sol.x,
            p,
            recursive_error,
            solve: SolveStats { iterations: sol.iterations, relative_residual: sol.relative_residual, converged: sol.converged },
        })
    }

    /// Least-squares solve with zero nonlinear load.
    pub fn initial_solve(&self) -> Result<IterationState> {
        let zero = vec![0.0; self.system.pde_rows.len()];
        self.solve(&zero, None, 0, None)
    }

    /// One nonlinear step from `prev`.
    pub fn iterate(&self, prev: &IterationState) -> Result<IterationState> {
        let load = nonlinear_load(self.system, &prev.u, self.q, self.basis, self.settings.cutoff_bound)?;
        let x0 = self.settings.warm_start.then_some(prev.u.as_slice());
        self.solve(&load, x0, prev.k + 1, Some(&prev.p))
    }

    /// Initial solve followed by `settings.iterations` nonlinear steps.
    pub fn run(&self) -> Result<Vec<IterationState>> {
        let mut states = vec![self.initial_solve().map_err(|e| e.in_stage("initial solve"))?];
        for k in 1..=self.settings.iterations {
            let next = self.iterate(states.last().unwrap()).map_err(|e| e.in_stage("nonlinear iteration"))?;
            let stop = self.settings.early_stop && k > 1 && {
                let p1 = states[1].p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                next.recursive_error.unwrap_or(f64::INFINITY) < 1e-6 * p1
            };
            states.push(next);
            if stop {
                break;
            }
        }
        Ok(states)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionMetric {
    pub label: String,
    pub true_max: f64,
    pub reconstructed_max: f64,
    pub relative_error: f64,
    /// Grid nodes inside the support.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub inclusions: Vec<InclusionMetric>,
    /// Location and value of the largest `p^(K)`.
    pub argmax: [f64; 3],
    pub argmax_in_support: bool,
    /// Per iterate `k = 0..K`.
    pub weighted_l2_error: Vec<f64>,
    pub relative_l2_error: Vec<f64>,
    /// Per iterate `k = 1..K`.
    pub recursive_errors: Vec<f64>,
    pub solves: Vec<SolveStats>,
}

/// `sqrt(h^2 Σ w^2 v^2)` over all nodes.
pub fn weighted_l2(values: &[f64], weights: &[f64], h: f64) -> f64 {
    (values.iter().zip(weights).map(|(v, w)| (w * v).powi(2)).sum::<f64>() * h * h).sqrt()
}

/// Carleman weight at every node, `node_offset` order.
pub fn node_weights(grid: &SpatialGrid, params: &CarlemanParams) -> Vec<f64> {
    let xs = grid.coords();
    xs.iter().flat_map(|&x| xs.iter().map(move |&y| (x, y))).map(|(x, y)| carleman_weight(x, y, params)).collect()
}

pub fn metrics(states: &[IterationState], grid: &SpatialGrid, scenario: &Scenario, params: &CarlemanParams) -> Metrics {
    let xs = grid.coords();
    let n = grid.n();
    let truth: Vec<f64> = xs.iter().flat_map(|&x| xs.iter().map(move |&y| (x, y))).map(|(x, y)| scenario.initial(x, y)).collect();
    let last = &states.last().expect("at least one iterate").p;

    let inclusions = scenario
        .inclusions
        .iter()
        .map(|inc| {
            let (mut t, mut r, mut count) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
            for i in 1..=n {
                for j in 1..=n {
                    if inc.shape.contains(xs[i - 1], xs[j - 1]) {
                        let k = grid.node_offset(i, j);
                        t = t.max(truth[k]);
                        r = r.max(last[k]);
                        count += 1;
                    }
                }
            }
            if count == 0 {
                (t, r) = (f64::NAN, f64::NAN);
            }
            InclusionMetric {
                label: inc.label.clone(),
                true_max: t,
                reconstructed_max: r,
                relative_error: (r - t).abs() / t.abs(),
                nodes: count,
            }
        })
        .collect();

    let (kmax, vmax) = last.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
    let (ax, ay) = (xs[kmax / n], xs[kmax % n]);
    let argmax_in_support = scenario.inclusions.iter().any(|inc| inc.shape.contains(ax, ay));

    let w = node_weights(grid, params);
    let h = grid.step();
    let ones = vec![1.0; truth.len()];
    let truth_norm = weighted_l2(&truth, &ones, h);
    let diff = |p: &[f64]| p.iter().zip(&truth).map(|(a, b)| a - b).collect::<Vec<_>>();
    let weighted_l2_error = states.iter().map(|s| weighted_l2(&diff(&s.p), &w, h)).collect();
    let relative_l2_error = states
        .iter()
        .map(|s| {
            let e = weighted_l2(&diff(&s.p), &ones, h);
            if truth_norm > 0.0 {
                e / truth_norm
            } else {
                e
            }
        })
        .collect();

    Metrics {
        inclusions,
        argmax: [ax, ay, vmax],
        argmax_in_support,
        weighted_l2_error,
        relative_l2_error,
        recursive_errors: states.iter().filter_map(|s| s.recursive_error).collect(),
        solves: states.iter().map(|s| s.solve).collect(),
    }
}

/// Weighted `L^2` distance between coefficient vectors, summed over modes.
pub fn coefficient_error(u: &[f64], reference: &[f64], grid: &SpatialGrid, modes: usize, params: &CarlemanParams) -> f64 {
    let n = grid.n();
    let mut s = 0.0;
    for i in 1..=n {
        for j in 1..=n {
            let w = carleman_weight(grid.coord(i), grid.coord(j), params);
            let k = unknown(n, modes, i, j, 1);
            let d: f64 = (0..modes).map(|m| (u[k + m] - reference[k + m]).powi(2)).sum();
            s += w * w * d;
        }
    }
    (s * grid.step().powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, ConstraintWeight};
    use crate::forward::CauchyRecord;
    use crate::scenario::{Coefficient, Inclusion, Shape};

    fn small(modes: usize, n: usize) -> (SpatialGrid, TimeBasis) {
        (SpatialGrid::new(1.0, n).unwrap(), TimeBasis::build(1.5, modes, 257).unwrap())
    }

    fn zero_data(grid: &SpatialGrid, modes: usize) -> CauchyRecord {
        let nodes = grid.boundary_nodes();
        let z = vec![vec![0.0; modes]; nodes.len()];
        CauchyRecord { nodes, f: z.clone(), g: z }
    }

    #[test]
    fn zero_data_gives_zero() {
        let (grid, basis) = small(3, 7);
        let sys = assemble(&grid, &vec![1.0; 49], &basis.stiffness(), &CarlemanParams::default(), ConstraintWeight::default(), &zero_data(&grid, 3)).unwrap();
        let q = Nonlinearity::Fisher;
        let inv = Inverter::new(&sys, &basis, &q, InversionSettings::default()).unwrap();
        let states = inv.run().unwrap();
        assert_eq!(states.len(), 6);
        for s in &states {
            assert!(s.p.iter().all(|&v| v == 0.0));
            assert_eq!(s.solve.iterations, 0);
        }
        assert_eq!(states.iter().filter_map(|s| s.recursive_error).count(), 5);
    }

    #[test]
    fn reconstruction_is_linear() {
        let psi0 = [0.5, -1.0, 2.0];
        let u: Vec<f64> = (0..27).map(|k| (k as f64).sin()).collect();
        let p = reconstruct(&u, &psi0, 3);
        let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        let p2 = reconstruct(&u2, &psi0, 3);
        for (a, b) in p.iter().zip(&p2) {
            assert_eq!(2.0 * a, *b);
        }
        assert_eq!(p[0], 0.5 * u[0] - u[1] + 2.0 * u[2]);
    }

    /// Data generated from a known coefficient field through the discrete
    /// operator, plus a source that makes it an exact fixed point.
    fn manufactured(q: &Nonlinearity, n: usize, modes: usize) -> (SpatialGrid, TimeBasis, EllipticSystem, Vec<f64>, Vec<f64>) {
        let (grid, basis) = small(modes, n);
        let xs = grid.coords();
        let mut ustar = vec![0.0; n * n * modes];
        for i in 1..=n {
            for j in 1..=n {
                for m in 1..=modes {
                    let (x, y) = (xs[i - 1], xs[j - 1]);
                    ustar[unknown(n, modes, i, j, m)] = (1.0 - x * x) * (1.0 + 0.5 * y) * (m as f64 * 0.7 + x - y).cos() / m as f64;
                }
            }
        }
        let nodes = grid.boundary_nodes();
        let f: Vec<Vec<f64>> = nodes.iter().map(|&(i, j)| (1..=modes).map(|m| ustar[unknown(n, modes, i, j, m)]).collect()).collect();
        let g: Vec<Vec<f64>> = nodes
            .iter()
            .map(|&(i, j)| {
                let (ii, jj) = crate::assembly::inward_neighbor(n, i, j);
                (1..=modes).map(|m| (ustar[unknown(n, modes, i, j, m)] - ustar[unknown(n, modes, ii, jj, m)]) / grid.step()).collect()
            })
            .collect();
        let cauchy = CauchyRecord { nodes, f, g };
        let c: Vec<f64> = xs.iter().flat_map(|&x| xs.iter().map(move |&y| Coefficient::Peaks.eval(x, y))).collect();
        let params = CarlemanParams::default();
        let sys = assemble(&grid, &c, &basis.stiffness(), &params, ConstraintWeight::default(), &cauchy).unwrap();
        let au = sys.matrix.spmv(&ustar).unwrap();
        let load = nonlinear_load(&sys, &ustar, q, &basis, 1e6).unwrap();
        let source: Vec<f64> = sys.pde_rows.clone().map(|r| au[r] + load[r]).collect();
        (grid, basis, sys, ustar, source)
    }

    #[test]
    fn contractive_instance_converges_geometrically() {
        let q = Nonlinearity::parse("0.5*sin(s)").unwrap();
        let (grid, basis, sys, ustar, source) = manufactured(&q, 9, 3);
        let settings = InversionSettings { tol: 1e-13, max_iter: 20000, iterations: 6, ..Default::default() };
        let inv = Inverter::new(&sys, &basis, &q, settings).unwrap().with_source(source).unwrap();
        let states = inv.run().unwrap();
        let params = CarlemanParams::default();
        let e: Vec<f64> = states.iter().map(|s| coefficient_error(&s.u, &ustar, &grid, 3, &params)).collect();
        for k in 2..e.len() {
            assert!(e[k] < e[k - 1], "{e:?}");
        }
        assert!(e[e.len() - 1] < 1e-3 * e[0], "{e:?}");
    }

    #[test]
    fn zero_q_is_a_fixed_point() {
        let q = Nonlinearity::Zero;
        let (_, basis, sys, _, source) = manufactured(&q, 7, 2);
        let settings = InversionSettings { tol: 1e-12, max_iter: 5000, iterations: 3, ..Default::default() };
        let inv = Inverter::new(&sys, &basis, &q, settings).unwrap().with_source(source).unwrap();
        let states = inv.run().unwrap();
        for s in &states[1..] {
            assert_eq!(s.p, states[0].p);
            assert_eq!(s.recursive_error, Some(0.0));
        }
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let q = Nonlinearity::parse("0.3*s").unwrap();
        let (_, basis, sys, ustar, source) = manufactured(&q, 7, 2);
        let run = |warm| {
            let settings = InversionSettings { tol: 1e-13, max_iter: 20000, iterations: 3, warm_start: warm, ..Default::default() };
            Inverter::new(&sys, &basis, &q, settings).unwrap().with_source(source.clone()).unwrap().run().unwrap()
        };
        let (a, b) = (run(false), run(true));
        let scale = ustar.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.last().unwrap().u.iter().zip(&b.last().unwrap().u) {
            assert!((x - y).abs() < 1e-6 * scale);
        }
    }

    #[test]
    fn metrics_are_zero_for_exact_reconstruction() {
        let grid = SpatialGrid::new(1.0, 21).unwrap();
        let scenario = Scenario {
            name: "t".into(),
            coefficient: Coefficient::Constant { value: 1.0 },
            q: Nonlinearity::Zero,
            inclusions: vec![Inclusion { label: "d".into(), value: 3.0, shape: Shape::Disk { cx: 0.2, cy: -0.1, r: 0.4 } }],
        };
        let xs = grid.coords();
        let p: Vec<f64> = xs.iter().flat_map(|&x| xs.iter().map(move |&y| (x, y))).map(|(x, y)| scenario.initial(x, y)).collect();
        let state = IterationState { k: 0, u: vec![], p, recursive_error: None, solve: SolveStats { iterations: 0, relative_residual: 0.0, converged: true } };
        let m = metrics(&[state], &grid, &scenario, &CarlemanParams::default());
        assert_eq!(m.inclusions[0].relative_error, 0.0);
        assert_eq!(m.inclusions[0].true_max, 3.0);
        assert!(m.argmax_in_support);
        assert_eq!(m.relative_l2_error, vec![0.0]);
        assert_eq!(m.weighted_l2_error, vec![0.0]);
    }
}
