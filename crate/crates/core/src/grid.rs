//! Uniform square grid on `[-R, R]^2` and the flattened ("line-up") index
//! shared by every block of the elliptic system.
//!
//! Public indices are 1-based; storage is 0-based.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    half_width: f64,
    n: usize,
    step: f64,
}

/// Which side of the square a boundary node sits on. Corners report the
/// x-edge (`Left`/`Right`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub fn name(self) -> &'static str {
        match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Top => "top",
        }
    }

    pub fn parse(s: &str) -> Option<Edge> {
        match s {
            "left" => Some(Edge::Left),
            "right" => Some(Edge::Right),
            "bottom" => Some(Edge::Bottom),
            "top" => Some(Edge::Top),
            _ => None,
        }
    }
}

impl SpatialGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("grid needs at least 3 nodes per axis, got {n}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid(format!("half-width must be positive, got {half_width}")));
        }
        Ok(Self { half_width, n, step: 2.0 * half_width / (n - 1) as f64 })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n
    }

    /// Coordinate of 1-based axis index `i`. The last node is pinned to `R`
    /// exactly.
    pub fn coord(&self, i: usize) -> f64 {
        debug_assert!((1..=self.n).contains(&i));
        if i == self.n {
            self.half_width
        } else {
            -self.half_width + (i - 1) as f64 * self.step
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.coord(i)).collect()
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 2 && i < self.n && j >= 2 && j < self.n
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        !self.is_interior(i, j)
    }

    pub fn edge_of(&self, i: usize, j: usize) -> Option<Edge> {
        if i == 1 {
            Some(Edge::Left)
        } else if i == self.n {
            Some(Edge::Right)
        } else if j == 1 {
            Some(Edge::Bottom)
        } else if j == self.n {
            Some(Edge::Top)
        } else {
            None
        }
    }

    /// All `4(n-1)` boundary nodes, 1-based, in lexicographic `(i, j)` order.
    pub fn boundary_nodes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4 * (self.n - 1));
        for i in 1..=self.n {
            for j in 1..=self.n {
                if self.is_boundary(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// 0-based row-major position of node `(i, j)`: `(i-1) n + (j-1)`.
    pub fn node_offset(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.n + (j - 1)
    }
}

/// Line-up index `(i-1) Nx N + (j-1) N + m` (1-based in and out).
pub fn lineup(i: usize, j: usize, m: usize, nx: usize, modes: usize) -> Result<usize> {
    if !(1..=nx).contains(&i) || !(1..=nx).contains(&j) || !(1..=modes).contains(&m) {
        return Err(Error::IndexOutOfRange(format!(
            "(i, j, m) = ({i}, {j}, {m}) outside 1..={nx} x 1..={nx} x 1..={modes}"
        )));
    }
    Ok((i - 1) * nx * modes + (j - 1) * modes + m)
}

/// Inverse of [`lineup`].
pub fn inverse_lineup(index: usize, nx: usize, modes: usize) -> Result<(usize, usize, usize)> {
    if index == 0 || index > nx * nx * modes {
        return Err(Error::IndexOutOfRange(format!("line-up index {index} outside 1..={}", nx * nx * modes)));
    }
    let k = index - 1;
    let m = k % modes + 1;
    let j = (k / modes) % nx + 1;
    let i = k / (modes * nx) + 1;
    Ok((i, j, m))
}

/// 0-based unknown position used internally by the assembler and solver.
#[inline]
pub(crate) fn unknown(grid_n: usize, modes: usize, i: usize, j: usize, m: usize) -> usize {
    ((i - 1) * grid_n + (j - 1)) * modes + (m - 1)
}
