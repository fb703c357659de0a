//! Carleman-weighted least-squares system for the spatial coefficient
//! fields `u_1..u_N`.
//!
//! Rows are stacked in three blocks:
//!
//! * PDE rows, one per interior node and mode, encoding
//!   `W (Δ_h u_m - c Σ_n s_mn u_n) = -W q_m`;
//! * Dirichlet rows `ω u_m = ω f_m` on boundary nodes;
//! * Neumann rows `ω (u_m(boundary) - u_m(inward)) / h = ω g_m`.
//!
//! Unknowns follow the line-up order: node `(i, j)` row-major, mode fastest.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{StiffnessMatrix, TimeBasis};
use crate::error::{Error, Result};
use crate::forward::CauchyRecord;
use crate::grid::{unknown, SpatialGrid};
use crate::scenario::Nonlinearity;
use crate::sparsela::{CsrMatrix, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanParams {
    pub lambda: f64,
    pub beta: f64,
    pub b: f64,
    pub x0: [f64; 2],
}

impl Default for CarlemanParams {
    fn default() -> Self {
        Self { lambda: 40.0, beta: 10.0, b: 5.0, x0: [0.0, 1.5] }
    }
}

impl CarlemanParams {
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        (x - self.x0[0]).hypot(y - self.x0[1])
    }

    /// Rejects `x0` in the closed square `[-R, R]^2`, `b <= max r`, negative
    /// `λ` and non-positive `β`.
    pub fn validate(&self, half_width: f64) -> Result<()> {
        let finite = [self.lambda, self.beta, self.b, self.x0[0], self.x0[1]].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("Carleman parameters must be finite"));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.beta <= 0.0 {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        let r = half_width;
        if self.x0[0].abs() <= r && self.x0[1].abs() <= r {
            return Err(Error::invalid(format!("x0 = ({}, {}) lies in the closed domain", self.x0[0], self.x0[1])));
        }
        let max_r = self.max_distance(r);
        if self.b <= max_r {
            return Err(Error::invalid(format!("b = {} must exceed the largest distance {max_r} from x0 to the domain", self.b)));
        }
        Ok(())
    }

    /// Largest `|x - x0|` over the square, attained at a corner.
    pub fn max_distance(&self, half_width: f64) -> f64 {
        let r = half_width;
        [(-r, -r), (-r, r), (r, -r), (r, r)].iter().map(|&(x, y)| self.distance(x, y)).fold(0.0, f64::max)
    }

    /// Smallest `|x - x0|` over the square.
    pub fn min_distance(&self, half_width: f64) -> f64 {
        let r = half_width;
        let cx = self.x0[0].clamp(-r, r);
        let cy = self.x0[1].clamp(-r, r);
        self.distance(cx, cy)
    }

    /// Non-fatal observations about a parameter set.
    pub fn warnings(&self, half_width: f64) -> Vec<String> {
        let mut out = vec![];
        let min_r = self.min_distance(half_width);
        if min_r <= 1.0 {
            out.push(format!("min |x - x0| over the domain is {min_r:.4}, not above 1"));
        }
        let scale = self.lambda * self.b.powf(-self.beta);
        if scale < 1.0 {
            out.push(format!("lambda b^-beta = {scale:.3e} is small; the weight is nearly constant"));
        }
        out
    }
}

/// `W(x, y) = exp(λ b^{-β} |x - x0|^β)`.
pub fn carleman_weight(x: f64, y: f64, params: &CarlemanParams) -> f64 {
    if params.lambda == 0.0 {
        return 1.0;
    }
    (params.lambda * (params.distance(x, y) / params.b).powf(params.beta)).exp()
}

/// Saturating clamp to `[-bound, bound]`.
pub fn cutoff(s: f64, bound: f64) -> f64 {
    s.clamp(-bound, bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintWeight {
    /// `ω = factor × max PDE row 2-norm`.
    Relative { factor: f64 },
    Absolute { value: f64 },
}

impl Default for ConstraintWeight {
    fn default() -> Self {
        ConstraintWeight::Relative { factor: 1e3 }
    }
}

#[derive(Debug, Clone)]
pub struct EllipticSystem {
    pub matrix: CsrMatrix,
    /// Right-hand side with zero nonlinear load.
    pub rhs: Vec<f64>,
    pub pde_rows: Range<usize>,
    pub dirichlet_rows: Range<usize>,
    pub neumann_rows: Range<usize>,
    pub omega: f64,
    pub nx: usize,
    pub modes: usize,
    /// Interior nodes in row order, each owning `modes` consecutive PDE rows.
    pub interior: Vec<(usize, usize)>,
    /// Carleman weight at each interior node.
    pub weights: Vec<f64>,
    /// The same matrix applied from its stencil, used by the solver.
    pub operator: StencilOperator,
}

impl EllipticSystem {
    pub fn unknowns(&self) -> usize {
        self.nx * self.nx * self.modes
    }

    /// Right-hand side with the PDE block set to `-load`.
    pub fn rhs_with_load(&self, load: &[f64]) -> Result<Vec<f64>> {
        if load.len() != self.pde_rows.len() {
            return Err(Error::DimensionMismatch { expected: self.pde_rows.len(), got: load.len() });
        }
        let mut b = self.rhs.clone();
        b[self.pde_rows.clone()].iter_mut().zip(load).for_each(|(b, l)| *b = -l);
        Ok(b)
    }

    pub fn to_triplet_text(&self) -> String {
        self.matrix.to_triplet_text()
    }
}

/// Matrix-free form of [`EllipticSystem::matrix`]: the PDE block is a
/// five-point stencil per mode plus a node-scaled copy of the dense
/// stiffness matrix, so products read only the vectors.
#[derive(Debug, Clone)]
pub struct StencilOperator {
    nx: usize,
    modes: usize,
    rows: usize,
    /// `W / h^2` and `W c` per interior node.
    lap: Vec<f64>,
    coupling: Vec<f64>,
    /// `s_mn` row-major, and its transpose.
    s: Vec<f64>,
    s_t: Vec<f64>,
    /// Unknown offsets of each boundary node and of its inward neighbour.
    boundary: Vec<(usize, usize)>,
    omega: f64,
    inv_h: f64,
    col_norms: Vec<f64>,
}

impl StencilOperator {
    fn interior_index(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.nx;
        (i > 1 && i < n && j > 1 && j < n).then(|| (i - 2) * (n - 2) + (j - 2))
    }
}

impl LinearOperator for StencilOperator {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.nx * self.nx * self.modes
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (n, modes) = (self.nx, self.modes);
        let stride = n * modes;
        let pde = self.lap.len() * modes;
        let (y_pde, y_bnd) = y.split_at_mut(pde);
        y_pde.par_chunks_mut(modes).enumerate().for_each(|(k, out)| {
            let (i, j) = (k / (n - 2) + 2, k % (n - 2) + 2);
            let base = unknown(n, modes, i, j, 1);
            let (lap, wc) = (self.lap[k], self.coupling[k]);
            let own = &x[base..base + modes];
            for m in 0..modes {
                let nb = x[base - stride + m] + x[base - modes + m] + x[base + modes + m] + x[base + stride + m];
                let srow = &self.s[m * modes..(m + 1) * modes];
                let coupled = dot(srow, own);
                out[m] = lap * (nb - 4.0 * own[m]) - wc * coupled;
            }
        });
        let nb = self.boundary.len() * modes;
        let (y_dir, y_neu) = y_bnd.split_at_mut(nb);
        let scale = self.omega * self.inv_h;
        for (b, &(cb, ci)) in self.boundary.iter().enumerate() {
            for m in 0..modes {
                y_dir[b * modes + m] = self.omega * x[cb + m];
                y_neu[b * modes + m] = scale * x[cb + m] - scale * x[ci + m];
            }
        }
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let (n, modes) = (self.nx, self.modes);
        let x_node = |k: usize| &x[k * modes..(k + 1) * modes];
        y.par_chunks_mut(modes).enumerate().for_each(|(node, out)| {
            let (i, j) = (node / n + 1, node % n + 1);
            out.iter_mut().for_each(|v| *v = 0.0);
            if let Some(k) = self.interior_index(i, j) {
                let (lap, wc, xs) = (self.lap[k], self.coupling[k], x_node(k));
                for (m, o) in out.iter_mut().enumerate() {
                    let scol = &self.s_t[m * modes..(m + 1) * modes];
                    let coupled = dot(scol, xs);
                    *o -= 4.0 * lap * xs[m] + wc * coupled;
                }
            }
            for (ii, jj) in [(i - 1, j), (i, j.wrapping_sub(1)), (i, j + 1), (i + 1, j)] {
                if let Some(k) = self.interior_index(ii, jj) {
                    let (lap, xs) = (self.lap[k], x_node(k));
                    out.iter_mut().zip(xs).for_each(|(o, v)| *o += lap * v);
                }
            }
        });
        let pde = self.lap.len() * modes;
        let nb = self.boundary.len() * modes;
        let scale = self.omega * self.inv_h;
        for (b, &(cb, ci)) in self.boundary.iter().enumerate() {
            for m in 0..modes {
                let (d, g) = (x[pde + b * modes + m], x[pde + nb + b * modes + m]);
                y[cb + m] += self.omega * d + scale * g;
                y[ci + m] -= scale * g;
            }
        }
    }

    fn column_norms(&self) -> Vec<f64> {
        self.col_norms.clone()
    }
}

/// Dot product with four independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Node on the inside of boundary node `(i, j)` used by its Neumann row;
/// the x-direction rule wins at corners.
pub fn inward_neighbor(nx: usize, i: usize, j: usize) -> (usize, usize) {
    if i == 1 {
        (2, j)
    } else if i == nx {
        (nx - 1, j)
    } else if j == 1 {
        (i, 2)
    } else {
        debug_assert_eq!(j, nx);
        (i, nx - 1)
    }
}

/// Builds the stacked system. `c` is sampled at every grid node in
/// [`SpatialGrid::node_offset`] order; `cauchy` must cover the boundary nodes
/// in [`SpatialGrid::boundary_nodes`] order.
pub fn assemble(
    grid: &SpatialGrid,
    c: &[f64],
    s: &StiffnessMatrix,
    params: &CarlemanParams,
    omega: ConstraintWeight,
    cauchy: &CauchyRecord,
) -> Result<EllipticSystem> {
    let nx = grid.n();
    let modes = s.size();
    if c.len() != grid.node_count() {
        return Err(Error::DimensionMismatch { expected: grid.node_count(), got: c.len() });
    }
    if let Some(k) = c.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        let (i, j) = (k / nx + 1, k % nx + 1);
        return Err(Error::NonFinite { what: "coefficient c (must be positive)", i, j });
    }
    let boundary = grid.boundary_nodes();
    if cauchy.nodes != boundary {
        return Err(Error::invalid(format!(
            "boundary data covers {} nodes; the grid has {} boundary nodes in a different order or count",
            cauchy.nodes.len(),
            boundary.len()
        )));
    }
    if cauchy.modes() != modes || cauchy.f.iter().chain(&cauchy.g).any(|r| r.len() != modes) {
        return Err(Error::DimensionMismatch { expected: modes, got: cauchy.modes() });
    }
    match omega {
        ConstraintWeight::Relative { factor: w } | ConstraintWeight::Absolute { value: w } if !(w > 0.0 && w.is_finite()) => {
            return Err(Error::invalid(format!("constraint weight must be positive, got {w}")));
        }
        _ => {}
    }

    let h2 = grid.step() * grid.step();
    let interior: Vec<(usize, usize)> =
        (2..nx).flat_map(|i| (2..nx).map(move |j| (i, j))).collect();
    let weights: Vec<f64> =
        interior.iter().map(|&(i, j)| carleman_weight(grid.coord(i), grid.coord(j), params)).collect();

    // Each interior node emits `modes` rows of `4 + modes` entries.
    let per_row = 4 + modes;
    let blocks: Vec<(Vec<usize>, Vec<f64>)> = interior
        .par_iter()
        .zip(&weights)
        .map(|(&(i, j), &w)| {
            let cij = c[grid.node_offset(i, j)];
            let mut cols = Vec::with_capacity(modes * per_row);
            let mut vals = Vec::with_capacity(modes * per_row);
            let lap = w / h2;
            for m in 1..=modes {
                cols.push(unknown(nx, modes, i - 1, j, m));
                vals.push(lap);
                cols.push(unknown(nx, modes, i, j - 1, m));
                vals.push(lap);
                let srow = s.row(m);
                for n in 1..=modes {
                    cols.push(unknown(nx, modes, i, j, n));
                    let mut v = -w * cij * srow[n - 1];
                    if n == m {
                        v -= 4.0 * lap;
                    }
                    vals.push(v);
                }
                cols.push(unknown(nx, modes, i, j + 1, m));
                vals.push(lap);
                cols.push(unknown(nx, modes, i + 1, j, m));
                vals.push(lap);
            }
            (cols, vals)
        })
        .collect();

    let pde_count = interior.len() * modes;
    let bnd_count = boundary.len() * modes;
    let mut row_ptr = Vec::with_capacity(pde_count + 2 * bnd_count + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(pde_count * per_row + 3 * bnd_count);
    let mut values = Vec::with_capacity(col_idx.capacity());
    for (cols, vals) in blocks {
        col_idx.extend_from_slice(&cols);
        values.extend_from_slice(&vals);
        for k in 1..=modes {
            row_ptr.push(row_ptr[0] + col_idx.len() - cols.len() + k * per_row);
        }
    }

    let max_row_norm = (0..pde_count)
        .map(|r| values[row_ptr[r]..row_ptr[r + 1]].iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let omega = match omega {
        ConstraintWeight::Relative { factor } => factor * max_row_norm.max(f64::MIN_POSITIVE),
        ConstraintWeight::Absolute { value } => value,
    };

    let mut rhs = vec![0.0; pde_count];
    for (&(i, j), f) in boundary.iter().zip(&cauchy.f) {
        for m in 1..=modes {
            col_idx.push(unknown(nx, modes, i, j, m));
            values.push(omega);
            row_ptr.push(col_idx.len());
            rhs.push(omega * f[m - 1]);
        }
    }
    let inv_h = 1.0 / grid.step();
    for (&(i, j), g) in boundary.iter().zip(&cauchy.g) {
        let (ii, jj) = inward_neighbor(nx, i, j);
        for m in 1..=modes {
            let cb = unknown(nx, modes, i, j, m);
            let ci = unknown(nx, modes, ii, jj, m);
            let (first, second) = if cb < ci { ((cb, omega * inv_h), (ci, -omega * inv_h)) } else { ((ci, -omega * inv_h), (cb, omega * inv_h)) };
            col_idx.extend_from_slice(&[first.0, second.0]);
            values.extend_from_slice(&[first.1, second.1]);
            row_ptr.push(col_idx.len());
            rhs.push(omega * g[m - 1]);
        }
    }

    let rows = row_ptr.len() - 1;
    let matrix = CsrMatrix::new(rows, nx * nx * modes, row_ptr, col_idx, values)?;
    let s_t: Vec<f64> = (0..modes * modes).map(|k| s.get(k % modes + 1, k / modes + 1)).collect();
    let operator = StencilOperator {
        nx,
        modes,
        rows,
        lap: weights.iter().map(|w| w / h2).collect(),
        coupling: interior.iter().zip(&weights).map(|(&(i, j), w)| w * c[grid.node_offset(i, j)]).collect(),
        s: (1..=modes).flat_map(|m| s.row(m).to_vec()).collect(),
        s_t,
        boundary: boundary
            .iter()
            .map(|&(i, j)| {
                let (ii, jj) = inward_neighbor(nx, i, j);
                (unknown(nx, modes, i, j, 1), unknown(nx, modes, ii, jj, 1))
            })
            .collect(),
        omega,
        inv_h,
        col_norms: matrix.column_norms(),
    };
    Ok(EllipticSystem {
        matrix,
        rhs,
        pde_rows: 0..pde_count,
        dirichlet_rows: pde_count..pde_count + bnd_count,
        neumann_rows: pde_count + bnd_count..pde_count + 2 * bnd_count,
        omega,
        nx,
        modes,
        interior,
        weights,
        operator,
    })
}

/// Weighted projections `W(x) ∫ q(Σ_n P(u_n) Ψ_n) Ψ_m dt` for every PDE row,
/// with `P` clamping at `±M √T`. `u` is in line-up order.
pub fn nonlinear_load(
    system: &EllipticSystem,
    u: &[f64],
    q: &Nonlinearity,
    basis: &TimeBasis,
    bound: f64,
) -> Result<Vec<f64>> {
    let modes = system.modes;
    if u.len() != system.unknowns() {
        return Err(Error::DimensionMismatch { expected: system.unknowns(), got: u.len() });
    }
    if basis.modes() != modes {
        return Err(Error::DimensionMismatch { expected: modes, got: basis.modes() });
    }
    if !(bound > 0.0) {
        return Err(Error::invalid(format!("cutoff bound M must be positive, got {bound}")));
    }
    if q.is_zero() {
        return Ok(vec![0.0; system.pde_rows.len()]);
    }
    let clamp = bound * basis.t_final().sqrt();
    let nx = system.nx;
    let blocks: Vec<Result<Vec<f64>>> = system
        .interior
        .par_iter()
        .zip(&system.weights)
        .map(|(&(i, j), &w)| {
            let start = unknown(nx, modes, i, j, 1);
            let coeffs: Vec<f64> = u[start..start + modes].iter().map(|&v| cutoff(v, clamp)).collect();
            let mut v = basis.synthesize(&coeffs);
            for s in v.iter_mut() {
                *s = q.eval(*s);
                if !s.is_finite() {
                    return Err(Error::NonFinite { what: "nonlinearity q", i, j });
                }
            }
            let mut qm = basis.project(&v)?;
            qm.iter_mut().for_each(|x| *x *= w);
            Ok(qm)
        })
        .collect();
    let mut out = Vec::with_capacity(system.pde_rows.len());
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}
