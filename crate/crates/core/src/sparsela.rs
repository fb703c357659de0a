//! Row-compressed sparse matrices and a column-scaled CGLS solver for
//! `min ||A x - b||`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest row or column count accepted from triplet text.
pub const MAX_DIM: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Validates raw CSR arrays: monotone offsets, strictly increasing
    /// in-bounds column indices within each row.
    pub fn new(rows: usize, cols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() || col_idx.len() != values.len() {
            return Err(Error::invalid("inconsistent CSR array lengths"));
        }
        for r in 0..rows {
            let (a, b) = (row_ptr[r], row_ptr[r + 1]);
            if b < a {
                return Err(Error::invalid(format!("row offsets decrease at row {r}")));
            }
            let cs = &col_idx[a..b];
            if cs.iter().any(|&c| c >= cols) || cs.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid(format!("row {r} has out-of-range or unsorted column indices")));
            }
        }
        Ok(Self { rows, cols, row_ptr, col_idx, values })
    }

    /// Builds from 0-based triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut t = triplets.to_vec();
        if let Some(&(r, c, _)) = t.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::IndexOutOfRange(format!("entry ({r}, {c}) outside {rows} x {cols}")));
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::new(rows, cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: n, cols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, row_ptr: vec![0; rows + 1], col_idx: vec![], values: vec![] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(columns, values)` of row `r` (0-based).
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cs, vs) = self.row(r);
        cs.binary_search(&c).map_or(0.0, |k| vs[k])
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(blocks: &[&CsrMatrix]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if let Some(b) = blocks.iter().find(|b| b.cols != cols) {
            return Err(Error::DimensionMismatch { expected: cols, got: b.cols });
        }
        let mut row_ptr = vec![0];
        let (mut col_idx, mut values) = (vec![], vec![]);
        for b in blocks {
            let base = col_idx.len();
            row_ptr.extend(b.row_ptr[1..].iter().map(|p| p + base));
            col_idx.extend_from_slice(&b.col_idx);
            values.extend_from_slice(&b.values);
        }
        Ok(Self { rows: row_ptr.len() - 1, cols, row_ptr, col_idx, values })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, row) in d.iter_mut().enumerate() {
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                row[*c] = *v;
            }
        }
        d
    }

    /// `y = A x`
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, got: x.len() });
        }
        let mut y = vec![0.0; self.rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A^T x`
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, got: x.len() });
        }
        let mut y = vec![0.0; self.cols];
        self.spmv_transpose_into(x, &mut y);
        Ok(y)
    }

    fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().with_min_len(4096).enumerate().for_each(|(r, out)| {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *out = s;
        });
    }

    fn spmv_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for (c, v) in self.col_idx.iter().zip(&self.values) {
            s[*c] += v * v;
        }
        s.iter_mut().for_each(|v| *v = v.sqrt());
        s
    }

    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }

    /// Coordinate text: a `# rows cols nnz` header, then one `row col value`
    /// line per stored entry, 1-based, 17 significant digits.
    pub fn to_triplet_text(&self) -> String {
        let mut out = format!("# {} {} {}\n", self.rows, self.cols, self.nnz());
        for r in 0..self.rows {
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                let _ = writeln!(out, "{} {} {:.16e}", r + 1, c + 1, v);
            }
        }
        out
    }

    /// Parses coordinate text. Without a header the shape is the largest
    /// index seen. Blank lines and extra `#` lines are ignored.
    pub fn from_triplet_text(text: &str) -> Result<Self> {
        let mut shape: Option<(usize, usize)> = None;
        let mut trip = vec![];
        let (mut max_r, mut max_c) = (0, 0);
        for (n, line) in text.lines().enumerate() {
            let perr = |msg: String| Error::Parse { line: n + 1, msg };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if shape.is_none() && trip.is_empty() {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() >= 2 {
                        let r = f[0].parse::<usize>().map_err(|_| perr(format!("bad row count `{}`", f[0])))?;
                        let c = f[1].parse::<usize>().map_err(|_| perr(format!("bad column count `{}`", f[1])))?;
                        shape = Some((r, c));
                    }
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(format!("expected `row col value`, got {} fields", f.len())));
            }
            let r = f[0].parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(|| perr(format!("bad row `{}`", f[0])))?;
            let c = f[1].parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(|| perr(format!("bad column `{}`", f[1])))?;
            let v = f[2].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| perr(format!("bad value `{}`", f[2])))?;
            max_r = max_r.max(r);
            max_c = max_c.max(c);
            trip.push((r - 1, c - 1, v));
        }
        let (rows, cols) = shape.unwrap_or((max_r, max_c));
        if max_r > rows || max_c > cols {
            return Err(Error::IndexOutOfRange(format!("entry ({max_r}, {max_c}) outside declared {rows} x {cols}")));
        }
        // The header is untrusted; refuse shapes that cannot be allocated.
        if rows.checked_add(1).is_none() || rows > MAX_DIM || cols > MAX_DIM {
            return Err(Error::invalid(format!("declared shape {rows} x {cols} is too large")));
        }
        let a = Self::from_triplets(rows, cols, &trip)?;
        if a.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("duplicate entries sum to a non-finite value"));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqOptions {
    /// Stop when `||D A^T (b - A x)|| / ||D A^T b|| <= tol`, `D` the inverse
    /// column norms.
    pub tol: f64,
    pub max_iter: usize,
    /// Record the residual history (used by tests to check monotonicity).
    pub record_history: bool,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000, record_history: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||D A^T (b - A x)|| / ||D A^T b||`, recomputed from `x`.
    pub relative_residual: f64,
    pub converged: bool,
    /// Per iteration: `(||b - A x_k||, ||A^T (b - A x_k)||)` from the
    /// recurrences. Empty unless requested.
    pub history: Vec<(f64, f64)>,
}

/// What CGLS needs from a matrix: products with it and its transpose, and
/// its column norms.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = A x`; `y` has `rows()` entries.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `y = A^T x`; `y` has `cols()` entries.
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
    fn column_norms(&self) -> Vec<f64>;
}

impl LinearOperator for CsrMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y)
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_transpose_into(x, y)
    }

    fn column_norms(&self) -> Vec<f64> {
        CsrMatrix::column_norms(self)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// CGLS on `min ||A x - b||` with column-norm scaling, starting from `x0`
/// (zero when `None`). Returns the iterate with the smallest normal-equation
/// residual; `converged` is false when `max_iter` ran out first.
pub fn lsq_solve<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x0: Option<&[f64]>, opts: &LsqOptions) -> Result<LsqSolution> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
        }
    }
    let d = inverse_column_norms(a);
    let mut at_r = vec![0.0; n];
    a.apply_transpose(b, &mut at_r);
    let norm_atb = scaled_norm(&at_r, &d);
    if norm_atb == 0.0 {
        return Ok(LsqSolution { x: vec![0.0; n], iterations: 0, relative_residual: 0.0, converged: true, history: vec![] });
    }

    // x = D y
    let mut y: Vec<f64> = match x0 {
        Some(x0) => x0.iter().zip(&d).map(|(x, d)| x / d).collect(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    if let Some(x0) = x0 {
        let mut ax = vec![0.0; m];
        a.apply(x0, &mut ax);
        r.iter_mut().zip(&ax).for_each(|(r, v)| *r -= v);
    }
    a.apply_transpose(&r, &mut at_r);
    let mut s: Vec<f64> = at_r.iter().zip(&d).map(|(v, d)| v * d).collect();
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let normal = |s: &[f64]| dot(s, s).sqrt();

    let mut best_y = y.clone();
    let mut best = normal(&s);
    let mut history = Vec::new();
    if opts.record_history {
        history.push((dot(&r, &r).sqrt(), best));
    }
    let mut iterations = 0;
    let mut dp = vec![0.0; n];
    let mut q = vec![0.0; m];
    while iterations < opts.max_iter && best > opts.tol * norm_atb {
        iterations += 1;
        dp.iter_mut().zip(&p).zip(&d).for_each(|((o, p), d)| *o = p * d);
        a.apply(&dp, &mut q);
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        if !alpha.is_finite() {
            return Err(Error::SolverNan(iterations));
        }
        y.iter_mut().zip(&p).for_each(|(y, p)| *y += alpha * p);
        r.iter_mut().zip(&q).for_each(|(r, q)| *r -= alpha * q);
        a.apply_transpose(&r, &mut at_r);
        s.iter_mut().zip(&at_r).zip(&d).for_each(|((s, v), d)| *s = v * d);
        let gamma_new = dot(&s, &s);
        if gamma_new.is_nan() {
            return Err(Error::SolverNan(iterations));
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        p.iter_mut().zip(&s).for_each(|(p, s)| *p = s + beta * *p);

        let res = normal(&s);
        if opts.record_history {
            history.push((dot(&r, &r).sqrt(), res));
        }
        if res < best {
            best = res;
            best_y.copy_from_slice(&y);
        }
        if gamma == 0.0 {
            break;
        }
    }

    let x: Vec<f64> = best_y.iter().zip(&d).map(|(y, d)| y * d).collect();
    let relative_residual = scaled_normal_residual(a, b, &x)? / norm_atb;
    if relative_residual.is_nan() {
        return Err(Error::SolverNan(iterations));
    }
    Ok(LsqSolution { x, iterations, relative_residual, converged: relative_residual <= opts.tol, history })
}

/// `diag(1 / ||a_j||)`, with 1 for empty columns.
pub fn inverse_column_norms<A: LinearOperator + ?Sized>(a: &A) -> Vec<f64> {
    a.column_norms().iter().map(|&c| if c > 0.0 { 1.0 / c } else { 1.0 }).collect()
}

fn scaled_norm(v: &[f64], d: &[f64]) -> f64 {
    v.iter().zip(d).map(|(v, d)| (v * d).powi(2)).sum::<f64>().sqrt()
}

/// `||D A^T (b - A x)||` with `D` from [`inverse_column_norms`].
pub fn scaled_normal_residual<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x: &[f64]) -> Result<f64> {
    if b.len() != a.rows() || x.len() != a.cols() {
        return Err(Error::DimensionMismatch { expected: a.rows() + a.cols(), got: b.len() + x.len() });
    }
    let mut ax = vec![0.0; a.rows()];
    a.apply(x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, v)| b - v).collect();
    let mut atr = vec![0.0; a.cols()];
    a.apply_transpose(&r, &mut atr);
    Ok(scaled_norm(&atr, &inverse_column_norms(a)))
}

/// `||A^T (b - A x)||`
pub fn normal_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Result<f64> {
    let ax = a.spmv(x)?;
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, v)| b - v).collect();
    Ok(a.spmv_transpose(&r)?.iter().map(|v| v * v).sum::<f64>().sqrt())
}
