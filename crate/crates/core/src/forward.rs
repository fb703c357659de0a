//! Data synthesis: explicit finite-difference solve of
//! `c u_t = Lap u + q(u)` on the box `(-R1, R1)^2` with zero Dirichlet data,
//! recording Dirichlet and outward Neumann traces on the boundary of the
//! inner square `(-R, R)^2`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::TimeBasis;
use crate::error::{Error, Result};
use crate::grid::{Edge, SpatialGrid};
use crate::scenario::Scenario;

pub const MAX_SAFETY: f64 = 0.95;
pub const DEFAULT_SAFETY: f64 = 0.9;
pub const BLOW_UP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardSettings {
    /// Half-width `R1` of the forward box.
    pub outer_half_width: f64,
    /// Forward nodes per axis. Must put every inner-grid node on a forward
    /// node, see [`aligned_forward_grid`].
    pub nodes: usize,
    /// Fraction of the explicit stability limit `c_min h^2 / 4`.
    pub safety: f64,
}

/// Forward grid with step `h / refinement` whose nodes include every inner
/// node: the margin `R1 - R` is rounded to a whole number of forward cells.
/// Returns the node count and the adjusted `R1`.
pub fn aligned_forward_grid(nx: usize, half_width: f64, outer_half_width: f64, refinement: usize) -> Result<(usize, f64)> {
    if nx < 2 || refinement == 0 || !(outer_half_width > half_width) {
        return Err(Error::invalid(format!(
            "cannot align a forward grid: nx = {nx}, refinement = {refinement}, R = {half_width}, R1 = {outer_half_width}"
        )));
    }
    let inner_cells = (nx - 1) * refinement;
    let h1 = 2.0 * half_width / inner_cells as f64;
    let margin = ((outer_half_width - half_width) / h1).round().max(1.0) as usize;
    Ok((inner_cells + 2 * margin + 1, half_width + margin as f64 * h1))
}

/// Geometry of the forward grid relative to the inner grid.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n1: usize,
    h1: f64,
    offset: usize,
    stride: usize,
}

impl Layout {
    fn new(grid: &SpatialGrid, settings: &ForwardSettings) -> Result<Self> {
        let r1 = settings.outer_half_width;
        let r = grid.half_width();
        if !(r1 > r) {
            return Err(Error::invalid(format!("outer half-width {r1} must exceed inner half-width {r}")));
        }
        let n1 = settings.nodes;
        if n1 < 3 {
            return Err(Error::invalid("forward grid needs at least 3 nodes per axis"));
        }
        let h1 = 2.0 * r1 / (n1 - 1) as f64;
        let stride = grid.step() / h1;
        let offset = (r1 - r) / h1;
        let integral = |v: f64| (v - v.round()).abs() < 1e-8 && v.round() >= 1.0;
        if !integral(stride) || !integral(offset) {
            return Err(Error::invalid(format!(
                "forward grid with {n1} nodes on R1 = {r1} is not aligned with the {}-node inner grid",
                grid.n()
            )));
        }
        Ok(Self { n1, h1, offset: offset.round() as usize, stride: stride.round() as usize })
    }

    /// Forward-grid index of inner 1-based axis index `i`.
    fn fine(&self, i: usize) -> usize {
        self.offset + (i - 1) * self.stride
    }
}

/// Samples the Dirichlet trace and the outward normal derivative on the inner
/// boundary from a forward-grid field.
#[derive(Debug, Clone)]
pub struct TraceProbe {
    n1: usize,
    h1: f64,
    /// Per boundary node: center index and the step toward the interior.
    taps: Vec<(usize, isize)>,
}

impl TraceProbe {
    fn new(grid: &SpatialGrid, layout: &Layout) -> Self {
        let n1 = layout.n1 as isize;
        let taps = grid
            .boundary_nodes()
            .into_iter()
            .map(|(i, j)| {
                let center = layout.fine(i) * layout.n1 + layout.fine(j);
                let inward = match grid.edge_of(i, j).expect("boundary node") {
                    Edge::Left => n1,
                    Edge::Right => -n1,
                    Edge::Bottom => 1,
                    Edge::Top => -1,
                };
                (center, inward)
            })
            .collect();
        Self { n1: layout.n1, h1: layout.h1, taps }
    }

    /// Builds a probe for an arbitrary aligned forward grid.
    pub fn for_grid(grid: &SpatialGrid, settings: &ForwardSettings) -> Result<Self> {
        Ok(Self::new(grid, &Layout::new(grid, settings)?))
    }

    pub fn forward_nodes(&self) -> usize {
        self.n1
    }

    /// `(f, g)` per boundary node; `g` uses `(3 u0 - 4 u_-1 + u_-2) / (2 h1)`
    /// with `u_-k` the node `k` steps inward.
    pub fn sample(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut f = Vec::with_capacity(self.taps.len());
        let mut g = Vec::with_capacity(self.taps.len());
        for &(c, d) in &self.taps {
            let u0 = u[c];
            let u1 = u[(c as isize + d) as usize];
            let u2 = u[(c as isize + 2 * d) as usize];
            f.push(u0);
            g.push((3.0 * u0 - 4.0 * u1 + u2) / (2.0 * self.h1));
        }
        (f, g)
    }
}

/// Space-time boundary traces on the inner square, sampled at the basis
/// quadrature times.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRecord {
    /// Inner-grid boundary nodes, 1-based, in [`SpatialGrid::boundary_nodes`]
    /// order.
    pub nodes: Vec<(usize, usize)>,
    pub edges: Vec<Edge>,
    pub times: Vec<f64>,
    /// `f[node][time]`
    pub f: Vec<Vec<f64>>,
    /// `g[node][time]`, outward normal derivative.
    pub g: Vec<Vec<f64>>,
    /// Initial field on the inner grid, row-major `(i-1) n + (j-1)`.
    pub initial: Vec<f64>,
    /// Largest `|u|` seen anywhere during the run.
    pub max_abs: f64,
    /// Largest `|u|` over the forward box at the final time.
    pub final_max: f64,
    pub steps: usize,
    pub dt: f64,
}

/// Runs the forward problem and records traces at `times` (ascending, within
/// `[0, T]` where `T` is the last time).
pub fn solve_forward(scenario: &Scenario, grid: &SpatialGrid, settings: &ForwardSettings, times: &[f64]) -> Result<BoundaryRecord> {
    if !(settings.safety > 0.0 && settings.safety <= MAX_SAFETY) {
        return Err(Error::invalid(format!("safety factor must be in (0, {MAX_SAFETY}], got {}", settings.safety)));
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return Err(Error::invalid("recording times must be non-empty, non-negative and ascending"));
    }
    let t_final = *times.last().unwrap();
    let layout = Layout::new(grid, settings)?;
    let probe = TraceProbe::new(grid, &layout);
    let (n1, h1) = (layout.n1, layout.h1);
    let r1 = settings.outer_half_width;
    let coord = |k: usize| if k == n1 - 1 { r1 } else { -r1 + k as f64 * h1 };

    let mut c_min = f64::INFINITY;
    let mut inv_c = vec![0.0; n1 * n1];
    let mut u = vec![0.0; n1 * n1];
    for i in 0..n1 {
        for j in 0..n1 {
            let (x, y) = (coord(i), coord(j));
            let c = scenario.coefficient.eval(x, y);
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid(format!("c({x}, {y}) = {c} is not positive")));
            }
            c_min = c_min.min(c);
            inv_c[i * n1 + j] = 1.0 / c;
            if i > 0 && j > 0 && i < n1 - 1 && j < n1 - 1 {
                u[i * n1 + j] = scenario.initial(x, y);
            }
        }
    }
    let initial = {
        let n = grid.n();
        let mut out = vec![0.0; n * n];
        for i in 1..=n {
            for j in 1..=n {
                out[grid.node_offset(i, j)] = u[layout.fine(i) * n1 + layout.fine(j)];
            }
        }
        out
    };

    let dt_max = settings.safety * c_min * h1 * h1 / 4.0;
    let steps = if t_final > 0.0 { (t_final / dt_max).ceil().max(1.0) as usize } else { 0 };
    let dt = if steps > 0 { t_final / steps as f64 } else { 0.0 };
    let inv_h2 = 1.0 / (h1 * h1);
    let q = &scenario.q;

    let nb = probe.taps.len();
    let mut f_rec = vec![Vec::with_capacity(times.len()); nb];
    let mut g_rec = vec![Vec::with_capacity(times.len()); nb];
    let mut next_time = 0;
    let (mut f_prev, mut g_prev) = probe.sample(&u);
    let mut t_prev = 0.0;
    while next_time < times.len() && times[next_time] <= 0.0 {
        for b in 0..nb {
            f_rec[b].push(f_prev[b]);
            g_rec[b].push(g_prev[b]);
        }
        next_time += 1;
    }

    let mut max_abs = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut final_max = max_abs;
    let mut next = vec![0.0; n1 * n1];
    for step in 1..=steps {
        let cur = &u;
        let row_max = next
            .par_chunks_mut(n1)
            .enumerate()
            .map(|(i, row)| {
                if i == 0 || i == n1 - 1 {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    return 0.0f64;
                }
                let base = i * n1;
                let mut m = 0.0f64;
                row[0] = 0.0;
                row[n1 - 1] = 0.0;
                for j in 1..n1 - 1 {
                    let k = base + j;
                    let c0 = cur[k];
                    let lap = (cur[k - n1] + cur[k + n1] + cur[k - 1] + cur[k + 1] - 4.0 * c0) * inv_h2;
                    let v = c0 + dt * inv_c[k] * (lap + q.eval(c0));
                    row[j] = v;
                    // NaN propagates through max as "not greater", so test it explicitly.
                    m = if v.is_nan() { f64::NAN } else { m.max(v.abs()) };
                }
                m
            })
            .reduce(|| 0.0, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) });
        std::mem::swap(&mut u, &mut next);
        let t_cur = step as f64 * dt;
        if !(row_max <= BLOW_UP) {
            let (k, v) = u
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bk, bv), (k, v)| if !v.is_finite() || v.abs() > bv { (k, if v.is_finite() { v.abs() } else { f64::INFINITY }) } else { (bk, bv) });
            return Err(Error::BlowUp { time: t_cur, value: v, i: k / n1, j: k % n1 });
        }
        max_abs = max_abs.max(row_max);
        final_max = row_max;

        let (f_cur, g_cur) = probe.sample(&u);
        while next_time < times.len() && (times[next_time] <= t_cur || step == steps) {
            let theta = ((times[next_time] - t_prev) / dt).clamp(0.0, 1.0);
            for b in 0..nb {
                f_rec[b].push((1.0 - theta) * f_prev[b] + theta * f_cur[b]);
                g_rec[b].push((1.0 - theta) * g_prev[b] + theta * g_cur[b]);
            }
            next_time += 1;
        }
        f_prev = f_cur;
        g_prev = g_cur;
        t_prev = t_cur;
    }

    let nodes = grid.boundary_nodes();
    let edges = nodes.iter().map(|&(i, j)| grid.edge_of(i, j).unwrap()).collect();
    Ok(BoundaryRecord { nodes, edges, times: times.to_vec(), f: f_rec, g: g_rec, initial, max_abs, final_max, steps, dt })
}

impl BoundaryRecord {
    /// One row per `(node, time)`: `edge,i,j,t,f,g`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge,i,j,t,f,g\n");
        for (b, &(i, j)) in self.nodes.iter().enumerate() {
            for (k, t) in self.times.iter().enumerate() {
                let _ = writeln!(out, "{},{i},{j},{t:.16e},{:.16e},{:.16e}", self.edges[b].name(), self.f[b][k], self.g[b][k]);
            }
        }
        out
    }

    /// Parses the output of [`BoundaryRecord::to_csv`]. Rows of one node must
    /// be contiguous and every node must carry the same time list.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "edge,i,j,t,f,g" => {}
            Some((n, _)) => return Err(Error::Parse { line: n + 1, msg: "expected header `edge,i,j,t,f,g`".into() }),
            None => return Err(Error::Parse { line: 1, msg: "empty input".into() }),
        }
        let mut rec = BoundaryRecord {
            nodes: vec![],
            edges: vec![],
            times: vec![],
            f: vec![],
            g: vec![],
            initial: vec![],
            max_abs: 0.0,
            final_max: 0.0,
            steps: 0,
            dt: 0.0,
        };
        for (n, line) in lines {
            let perr = |msg: String| Error::Parse { line: n + 1, msg };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 6 {
                return Err(perr(format!("expected 6 columns, got {}", cols.len())));
            }
            let edge = Edge::parse(cols[0]).ok_or_else(|| perr(format!("unknown edge `{}`", cols[0])))?;
            let idx = |s: &str| s.parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(|| perr(format!("bad index `{s}`")));
            let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| perr(format!("bad number `{s}`")));
            let node = (idx(cols[1])?, idx(cols[2])?);
            let (t, f, g) = (num(cols[3])?, num(cols[4])?, num(cols[5])?);
            if rec.nodes.last() != Some(&node) {
                if rec.nodes.contains(&node) {
                    return Err(perr(format!("rows of node {node:?} are not contiguous")));
                }
                if let Some(last) = rec.f.last() {
                    if last.len() != rec.f[0].len() {
                        return Err(perr("nodes carry different numbers of time samples".into()));
                    }
                }
                rec.nodes.push(node);
                rec.edges.push(edge);
                rec.f.push(vec![]);
                rec.g.push(vec![]);
            }
            let b = rec.nodes.len() - 1;
            let k = rec.f[b].len();
            if b == 0 {
                if rec.times.last().is_some_and(|&last| t < last) {
                    return Err(perr("times must be ascending".into()));
                }
                rec.times.push(t);
            } else if rec.times.get(k) != Some(&t) {
                return Err(perr(format!("time {t} does not match the first node's time list")));
            }
            rec.f[b].push(f);
            rec.g[b].push(g);
            rec.max_abs = rec.max_abs.max(f.abs());
        }
        if rec.f.last().is_some_and(|l| l.len() != rec.times.len()) {
            return Err(Error::Parse { line: 0, msg: "last node has a different number of time samples".into() });
        }
        Ok(rec)
    }
}

/// Spectral boundary data `f_m`, `g_m` per inner boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyRecord {
    pub nodes: Vec<(usize, usize)>,
    /// `f[node][m-1]`
    pub f: Vec<Vec<f64>>,
    /// `g[node][m-1]`
    pub g: Vec<Vec<f64>>,
}

/// Projects the recorded traces onto the time basis.
pub fn extract_cauchy(record: &BoundaryRecord, basis: &TimeBasis) -> Result<CauchyRecord> {
    if record.times.len() != basis.times().len() {
        return Err(Error::DimensionMismatch { expected: basis.times().len(), got: record.times.len() });
    }
    let f = record.f.iter().map(|s| basis.project(s)).collect::<Result<Vec<_>>>()?;
    let g = record.g.iter().map(|s| basis.project(s)).collect::<Result<Vec<_>>>()?;
    Ok(CauchyRecord { nodes: record.nodes.clone(), f, g })
}

/// Multiplies every value by `1 + delta xi`, `xi` uniform on `[-1, 1)`.
pub fn add_noise(values: &mut [f64], delta: f64, rng: &mut impl Rng) {
    for v in values {
        let xi: f64 = 2.0 * rng.gen::<f64>() - 1.0;
        *v *= 1.0 + delta * xi;
    }
}

impl CauchyRecord {
    /// Noisy copy. All `f` coefficients are perturbed first, node by node,
    /// then all `g` coefficients, from one ChaCha8 stream seeded by `seed`.
    pub fn with_noise(&self, delta: f64, seed: u64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("noise level must be non-negative, got {delta}")));
        }
        let mut out = self.clone();
        if delta == 0.0 {
            return Ok(out);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for row in out.f.iter_mut().chain(out.g.iter_mut()) {
            add_noise(row, delta, &mut rng);
        }
        Ok(out)
    }

    pub fn modes(&self) -> usize {
        self.f.first().map_or(0, Vec::len)
    }
}
