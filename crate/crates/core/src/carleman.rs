//! Empirical probe of the weighted coercivity estimate
//!
//! ```text
//! ∫ W²|Δv|² ≥ C [ λ⁻¹ ∫ W² Σ_ij |∂_ij v|² + λ³ ∫ W² v² + λ ∫ W² |∇v|² ]
//! ```
//!
//! for functions vanishing with their gradient on the boundary of the square.
//! `Ĉ(λ)` is the ratio of the left side to the bracket.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::CarlemanParams;
use crate::error::{Error, Result};

pub const MIN_QUADRATURE_POINTS: usize = 401;
pub const BOUNDARY_TOL: f64 = 1e-10;

/// `a ((R² - x²)(R² - y²))²`, optionally times `cos(k x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TestFunction {
    Polynomial { a: f64 },
    Cosine { a: f64, k: f64 },
}

/// Value and derivatives `(v, v_x, v_y, v_xx, v_xy, v_yy)`.
pub type Jet = [f64; 6];

impl TestFunction {
    pub fn scaled(self, s: f64) -> Self {
        match self {
            TestFunction::Polynomial { a } => TestFunction::Polynomial { a: a * s },
            TestFunction::Cosine { a, k } => TestFunction::Cosine { a: a * s, k },
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::Polynomial { a } => format!("polynomial(a={a})"),
            TestFunction::Cosine { a, k } => format!("cosine(a={a}, k={k})"),
        }
    }

    pub fn jet(&self, x: f64, y: f64, half_width: f64) -> Jet {
        let r2 = half_width * half_width;
        let bump = |s: f64| {
            let d = r2 - s * s;
            (d * d, -4.0 * s * d, 12.0 * s * s - 4.0 * r2)
        };
        let (a, k) = match *self {
            TestFunction::Polynomial { a } => (a, 0.0),
            TestFunction::Cosine { a, k } => (a, k),
        };
        let (px, px1, px2) = bump(x);
        let (py, py1, py2) = bump(y);
        let (m, m1, m2) = if k == 0.0 {
            (1.0, 0.0, 0.0)
        } else {
            let (s, c) = (k * x).sin_cos();
            (c, -k * s, -k * k * c)
        };
        let xv = px * m;
        let xd = px1 * m + px * m1;
        let xdd = px2 * m + 2.0 * px1 * m1 + px * m2;
        [a * xv * py, a * xd * py, a * xv * py1, a * xdd * py, a * xd * py1, a * xv * py2]
    }
}

/// `λ_min, ..., λ_max` with `count` geometrically spaced values; a single
/// value when the ends coincide.
pub fn lambda_sweep(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(Error::invalid(format!("lambda sweep needs 0 < min <= max, got [{min}, {max}]")));
    }
    if min == max || count <= 1 {
        return Ok(vec![min]);
    }
    let ratio = (max / min).ln() / (count - 1) as f64;
    Ok((0..count).map(|k| if k == count - 1 { max } else { min * (ratio * k as f64).exp() }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub lambda: f64,
    pub lhs: f64,
    pub term_hess: f64,
    pub term_grad: f64,
    pub term_val: f64,
    pub c_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub function: TestFunction,
    pub rows: Vec<ReportRow>,
    /// Every integral vanished.
    pub degenerate: bool,
}

impl InequalityReport {
    pub fn min_c_hat(&self) -> f64 {
        self.rows.iter().map(|r| r.c_hat).fold(f64::INFINITY, f64::min)
    }

    /// Rows with `Ĉ <= 0` or not finite.
    pub fn violations(&self) -> Vec<ReportRow> {
        if self.degenerate {
            return vec![];
        }
        self.rows.iter().filter(|r| !(r.c_hat > 0.0)).copied().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,lhs,term_hess,term_grad,term_val,c_hat\n");
        for r in &self.rows {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", r.lambda, r.lhs, r.term_hess, r.term_grad, r.term_val, r.c_hat);
        }
        out
    }
}

/// Composite Simpson weights on `n` (odd) equispaced points over `[-r, r]`.
fn simpson(n: usize, r: f64) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 * r / (n - 1) as f64;
    let x = (0..n).map(|i| if i == n - 1 { r } else { -r + i as f64 * h }).collect();
    let w = (0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            c * h / 3.0
        })
        .collect();
    (x, w)
}

/// Largest `|v|` and `|∇v|` over `samples` points per edge.
pub fn boundary_residual(jet: impl Fn(f64, f64) -> Jet, half_width: f64, samples: usize) -> f64 {
    let r = half_width;
    let mut worst = 0.0f64;
    for k in 0..samples {
        let s = -r + 2.0 * r * k as f64 / (samples - 1) as f64;
        for (x, y) in [(-r, s), (r, s), (s, -r), (s, r)] {
            let j = jet(x, y);
            worst = worst.max(j[0].abs()).max(j[1].abs()).max(j[2].abs());
        }
    }
    worst
}

/// Evaluates the estimate's four integrals for each `λ` with `params.beta`,
/// `params.b` and `params.x0` held fixed, by tensor Simpson on `points²`
/// nodes.
pub fn check(v: &TestFunction, params: &CarlemanParams, half_width: f64, lambdas: &[f64], points: usize) -> Result<InequalityReport> {
    let rows = check_jet(|x, y| v.jet(x, y, half_width), &v.label(), params, half_width, lambdas, points)?;
    let degenerate = rows.iter().all(|r| r.lhs == 0.0 && r.term_hess == 0.0 && r.term_grad == 0.0 && r.term_val == 0.0);
    Ok(InequalityReport { function: *v, rows, degenerate })
}

/// [`check`] for an arbitrary jet.
pub fn check_jet(
    jet: impl Fn(f64, f64) -> Jet + Sync,
    label: &str,
    params: &CarlemanParams,
    half_width: f64,
    lambdas: &[f64],
    points: usize,
) -> Result<Vec<ReportRow>> {
    if points < MIN_QUADRATURE_POINTS || points % 2 == 0 {
        return Err(Error::invalid(format!("quadrature needs an odd point count of at least {MIN_QUADRATURE_POINTS}, got {points}")));
    }
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::invalid("lambda values must be positive and finite"));
    }
    let res = boundary_residual(&jet, half_width, 257);
    if res > BOUNDARY_TOL {
        return Err(Error::invalid(format!("{label} does not vanish to first order on the boundary (residual {res:e})")));
    }

    let (xs, ws) = simpson(points, half_width);
    // Per node: quadrature weight, r^β / b^β, and the four unweighted integrands.
    let nodes: Vec<[f64; 6]> = xs
        .par_iter()
        .zip(&ws)
        .flat_map_iter(|(&x, &wx)| {
            let jet = &jet;
            xs.iter().zip(&ws).map(move |(&y, &wy)| {
                let j = jet(x, y);
                let lap = j[3] + j[5];
                let hess = j[3] * j[3] + 2.0 * j[4] * j[4] + j[5] * j[5];
                let grad = j[1] * j[1] + j[2] * j[2];
                let rb = (params.distance(x, y) / params.b).powf(params.beta);
                [wx * wy, rb, lap * lap, hess, grad, j[0] * j[0]]
            })
        })
        .collect();

    let rows: Vec<ReportRow> = lambdas
        .par_iter()
        .map(|&lambda| {
            let mut s = [0.0f64; 4];
            for n in &nodes {
                let w = n[0] * (2.0 * lambda * n[1]).exp();
                for k in 0..4 {
                    s[k] += w * n[2 + k];
                }
            }
            let term_hess = s[1] / lambda;
            let term_grad = lambda * s[2];
            let term_val = lambda.powi(3) * s[3];
            let rhs = term_hess + term_grad + term_val;
            let c_hat = if rhs > 0.0 { s[0] / rhs } else { f64::NAN };
            ReportRow { lambda, lhs: s[0], term_hess, term_grad, term_val, c_hat }
        })
        .collect();
    Ok(rows)
}

/// The polynomial member plus cosine modulations with `k = 1, 2, 3`.
pub fn default_family() -> Vec<TestFunction> {
    let mut out = vec![TestFunction::Polynomial { a: 1.0 }];
    out.extend((1..=3).map(|k| TestFunction::Cosine { a: 1.0, k: k as f64 }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_matches_finite_differences() {
        let v = TestFunction::Cosine { a: 1.7, k: 2.5 };
        let (x, y, e) = (0.31, -0.47, 1e-5);
        let j = v.jet(x, y, 1.0);
        let f = |x, y| v.jet(x, y, 1.0)[0];
        let fx = |x, y| v.jet(x, y, 1.0)[1];
        let fy = |x, y| v.jet(x, y, 1.0)[2];
        assert!((j[1] - (f(x + e, y) - f(x - e, y)) / (2.0 * e)).abs() < 1e-8);
        assert!((j[2] - (f(x, y + e) - f(x, y - e)) / (2.0 * e)).abs() < 1e-8);
        assert!((j[3] - (fx(x + e, y) - fx(x - e, y)) / (2.0 * e)).abs() < 1e-7);
        assert!((j[4] - (fx(x, y + e) - fx(x, y - e)) / (2.0 * e)).abs() < 1e-7);
        assert!((j[5] - (fy(x, y + e) - fy(x, y - e)) / (2.0 * e)).abs() < 1e-7);
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let (x, w) = simpson(401, 1.0);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * (x.powi(3) + x * x)).sum();
        assert!((s - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn polynomial_integrals_match_closed_form() {
        // λ -> 0 limit with W = 1: ∫∫ v² for v = ((1-x²)(1-y²))² is (256/315)².
        let params = CarlemanParams { lambda: 0.0, ..Default::default() };
        let r = check(&TestFunction::Polynomial { a: 1.0 }, &params, 1.0, &[1e-12], 401).unwrap();
        let val = r.rows[0].term_val / 1e-36;
        assert!((val - (256.0f64 / 315.0).powi(2)).abs() < 1e-8, "{val}");
    }

    #[test]
    fn sweep_endpoints() {
        let s = lambda_sweep(40.0, 400.0, 5).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0], 40.0);
        assert_eq!(s[4], 400.0);
        assert!(s.windows(2).all(|w| (w[1] / w[0] - 10f64.powf(0.25)).abs() < 1e-12));
        assert_eq!(lambda_sweep(40.0, 40.0, 16).unwrap(), vec![40.0]);
        assert!(lambda_sweep(0.0, 4.0, 3).is_err());
        assert!(lambda_sweep(5.0, 4.0, 3).is_err());
    }

    #[test]
    fn zero_function_is_degenerate() {
        let r = check(&TestFunction::Polynomial { a: 0.0 }, &CarlemanParams::default(), 1.0, &[40.0], 401).unwrap();
        assert!(r.degenerate);
        assert!(r.violations().is_empty());
        let row = r.rows[0];
        assert_eq!([row.lhs, row.term_hess, row.term_grad, row.term_val], [0.0; 4]);
    }

    #[test]
    fn doubling_scales_by_four() {
        let p = CarlemanParams::default();
        let v = TestFunction::Cosine { a: 1.0, k: 3.0 };
        let l = [40.0, 120.0, 400.0];
        let a = check(&v, &p, 1.0, &l, 401).unwrap();
        let b = check(&v.scaled(2.0), &p, 1.0, &l, 401).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(y.lhs, 4.0 * x.lhs);
            assert_eq!(y.term_hess, 4.0 * x.term_hess);
            assert_eq!(y.term_grad, 4.0 * x.term_grad);
            assert_eq!(y.term_val, 4.0 * x.term_val);
            assert!((y.c_hat - x.c_hat).abs() <= 1e-12 * x.c_hat);
        }
    }

    #[test]
    fn rejects_functions_not_vanishing_on_boundary() {
        let p = CarlemanParams::default();
        let v = TestFunction::Polynomial { a: 1.0 };
        assert!(boundary_residual(|x, y| v.jet(x, y, 1.0), 1.0, 101) < 1e-14);
        // support wider than the domain
        let wide = |x, y| v.jet(x, y, 1.2);
        assert!(check_jet(wide, "wide", &p, 1.0, &[40.0], 401).is_err());
        // vanishes but with a nonzero normal derivative
        let simple = |x: f64, y: f64| {
            let (a, b) = (1.0 - x * x, 1.0 - y * y);
            [a * b, -2.0 * x * b, -2.0 * y * a, -2.0 * b, 4.0 * x * y, -2.0 * a]
        };
        assert!(check_jet(simple, "simple", &p, 1.0, &[40.0], 401).is_err());
        assert!(check(&v, &p, 1.0, &[40.0], 399).is_err());
        assert!(check(&v, &p, 1.0, &[40.0], 402).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = check(&TestFunction::Polynomial { a: 1.0 }, &CarlemanParams::default(), 1.0, &[40.0, 80.0], 401).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "lambda,lhs,term_hess,term_grad,term_val,c_hat");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 6);
    }
}
