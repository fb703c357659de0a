//! Orthonormal time basis on `[0, T]` built from
//! `phi_n(t) = (t - T/2)^(n-1) e^(t - T/2)`, its stiffness matrix
//! `s_mn = int Psi_n' Psi_m dt`, and projection of time series onto it.
//!
//! Gram-Schmidt runs on `e^tau P_{n-1}(tau / (T/2))` with `P_k` the Legendre
//! polynomials. Those span the same nested spaces as the monomial family and
//! both have positive leading coefficients, so the orthonormalized functions
//! coincide with the ones obtained from `phi_n`. The monomial family loses
//! about six digits by `n = 35`; the Legendre one does not.

use crate::error::{Error, Result};

pub const DEFAULT_MODES: usize = 35;
pub const DEFAULT_QUADRATURE_NODES: usize = 4097;
pub const MAX_MODES: usize = 40;

/// Tolerance on `|<Psi_m, Psi_n> - delta_mn|` before construction fails.
const ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Chebyshev-Lobatto nodes with Clenshaw-Curtis weights.
    #[default]
    ClenshawCurtis,
    /// Composite Simpson on a uniform grid.
    Simpson,
}

/// Nodes and weights on `[0, t_final]`. Both rules include the endpoints as
/// the first and last node.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(rule: QuadratureRule, t_final: f64, count: usize) -> Result<Self> {
        if count < 3 || count % 2 == 0 {
            return Err(Error::invalid(format!("quadrature node count must be odd and >= 3, got {count}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::invalid(format!("final time must be positive, got {t_final}")));
        }
        Ok(match rule {
            QuadratureRule::Simpson => simpson(t_final, count),
            QuadratureRule::ClenshawCurtis => clenshaw_curtis(t_final, count),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

fn simpson(t_final: f64, count: usize) -> Quadrature {
    let h = t_final / (count - 1) as f64;
    let nodes = (0..count).map(|k| if k == count - 1 { t_final } else { k as f64 * h }).collect();
    let weights = (0..count)
        .map(|k| {
            let c = if k == 0 || k == count - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    Quadrature { nodes, weights }
}

fn clenshaw_curtis(t_final: f64, count: usize) -> Quadrature {
    let n = count - 1;
    let half = n / 2;
    // cos(pi r / n) for r in 0..2n; every angle below is a multiple of pi / n.
    let table: Vec<f64> = (0..2 * n).map(|r| (std::f64::consts::PI * r as f64 / n as f64).cos()).collect();
    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for k in 0..count {
        let x = -table[k % (2 * n)];
        nodes.push(if k == 0 {
            0.0
        } else if k == n {
            t_final
        } else {
            0.5 * t_final * (1.0 + x)
        });
        let mut s = 0.0;
        for j in 1..=half {
            let b = if j == half { 1.0 } else { 2.0 };
            s += b / (4.0 * (j * j) as f64 - 1.0) * table[(2 * j * k) % (2 * n)];
        }
        let c = if k == 0 || k == n { 1.0 } else { 2.0 };
        weights.push(0.5 * t_final * c / n as f64 * (1.0 - s));
    }
    Quadrature { nodes, weights }
}

/// `Psi_1..Psi_N` and their derivatives sampled on a quadrature grid.
#[derive(Debug, Clone)]
pub struct TimeBasis {
    t_final: f64,
    modes: usize,
    rule: QuadratureRule,
    quad: Quadrature,
    values: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

impl TimeBasis {
    pub fn build(t_final: f64, modes: usize, nodes: usize) -> Result<Self> {
        Self::build_with_rule(t_final, modes, nodes, QuadratureRule::default())
    }

    pub fn build_with_rule(t_final: f64, modes: usize, nodes: usize, rule: QuadratureRule) -> Result<Self> {
        if modes == 0 || modes > MAX_MODES {
            return Err(Error::invalid(format!("mode count must be in 1..={MAX_MODES}, got {modes}")));
        }
        if nodes < 4 * modes + 1 {
            return Err(Error::invalid(format!("need at least 4N+1 = {} quadrature nodes, got {nodes}", 4 * modes + 1)));
        }
        let quad = Quadrature::new(rule, t_final, nodes)?;
        let (mut values, mut derivs) = legendre_family(&quad.nodes, t_final, modes);

        let ip = |a: &[f64], b: &[f64]| -> f64 { quad.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum() };

        // Modified Gram-Schmidt, one re-orthogonalization sweep. The same
        // linear combinations are applied to the derivative samples, which
        // keeps Psi_n' the exact derivative of the expansion.
        for n in 0..modes {
            for _sweep in 0..2 {
                for m in 0..n {
                    let r = ip(&values[n], &values[m]);
                    let (head, tail) = values.split_at_mut(n);
                    axpy(-r, &head[m], &mut tail[0]);
                    let (head, tail) = derivs.split_at_mut(n);
                    axpy(-r, &head[m], &mut tail[0]);
                }
            }
            let norm = ip(&values[n], &values[n]).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Orthogonality { m: n + 1, n: n + 1, deviation: 1.0 });
            }
            values[n].iter_mut().for_each(|v| *v /= norm);
            derivs[n].iter_mut().for_each(|v| *v /= norm);
        }

        let basis = Self { t_final, modes, rule, quad, values, derivs };
        let (m, n, deviation) = basis.max_gram_deviation();
        if deviation > ORTHOGONALITY_TOL {
            return Err(Error::Orthogonality { m, n, deviation });
        }
        Ok(basis)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn times(&self) -> &[f64] {
        &self.quad.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.quad.weights
    }

    /// Samples of `Psi_n`, `n` 1-based.
    pub fn values(&self, n: usize) -> &[f64] {
        &self.values[n - 1]
    }

    /// Samples of `Psi_n'`, `n` 1-based.
    pub fn derivatives(&self, n: usize) -> &[f64] {
        &self.derivs[n - 1]
    }

    pub fn at_start(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0]).collect()
    }

    pub fn at_end(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[v.len() - 1]).collect()
    }

    /// Discrete inner product under the basis quadrature.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.quad.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    /// Largest `|<Psi_m, Psi_n> - delta_mn|` and the (1-based) pair where it
    /// occurs.
    pub fn max_gram_deviation(&self) -> (usize, usize, f64) {
        let mut worst = (1, 1, 0.0);
        for m in 0..self.modes {
            for n in 0..=m {
                let g = self.inner(&self.values[m], &self.values[n]);
                let d = (g - if m == n { 1.0 } else { 0.0 }).abs();
                if d > worst.2 {
                    worst = (m + 1, n + 1, d);
                }
            }
        }
        worst
    }

    pub fn stiffness(&self) -> StiffnessMatrix {
        let n = self.modes;
        let mut data = vec![0.0; n * n];
        for m in 0..n {
            for k in 0..n {
                data[m * n + k] = self.inner(&self.derivs[k], &self.values[m]);
            }
        }
        StiffnessMatrix { n, data }
    }

    /// `c_n = int series(t) Psi_n(t) dt` for `n = 1..N`.
    pub fn project(&self, series: &[f64]) -> Result<Vec<f64>> {
        if series.len() != self.quad.len() {
            return Err(Error::DimensionMismatch { expected: self.quad.len(), got: series.len() });
        }
        let ws: Vec<f64> = self.quad.weights.iter().zip(series).map(|(w, s)| w * s).collect();
        Ok(self.values.iter().map(|psi| psi.iter().zip(&ws).map(|(p, w)| p * w).sum()).collect())
    }

    /// `sum_n coeffs[n] Psi_n(t_q)`; uses the first `coeffs.len()` modes.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.quad.len()];
        for (c, psi) in coeffs.iter().zip(&self.values) {
            axpy(*c, psi, &mut out);
        }
        out
    }

    /// For each truncation level in `levels`, the largest
    /// `|f - sum_{n <= N'} f_n Psi_n|` over all series and quadrature times.
    pub fn truncation_diagnostic(&self, series: &[Vec<f64>], levels: &[usize]) -> Result<Vec<f64>> {
        if let Some(&bad) = levels.iter().find(|&&l| l > self.modes) {
            return Err(Error::invalid(format!("truncation level {bad} exceeds basis size {}", self.modes)));
        }
        let mut errors = vec![0.0f64; levels.len()];
        for f in series {
            let coeffs = self.project(f)?;
            for (e, &level) in errors.iter_mut().zip(levels) {
                let approx = self.synthesize(&coeffs[..level]);
                let worst = f.iter().zip(&approx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                *e = e.max(worst);
            }
        }
        Ok(errors)
    }
}

/// Samples of `e^tau P_k(tau / a)` and their `t`-derivatives, `k < modes`,
/// `tau = t - T/2`, `a = T/2`.
fn legendre_family(times: &[f64], t_final: f64, modes: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let a = 0.5 * t_final;
    let mut values = vec![vec![0.0; times.len()]; modes];
    let mut derivs = vec![vec![0.0; times.len()]; modes];
    for (q, &t) in times.iter().enumerate() {
        let tau = t - a;
        let x = tau / a;
        let e = tau.exp();
        let (mut p_prev, mut p) = (0.0, 1.0);
        let (mut d_prev, mut d) = (0.0, 0.0);
        for k in 0..modes {
            values[k][q] = e * p;
            derivs[k][q] = e * (p + d / a);
            let kf = k as f64;
            let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
            let d_next = d_prev + (2.0 * kf + 1.0) * p;
            p_prev = p;
            p = p_next;
            d_prev = d;
            d = d_next;
        }
    }
    (values, derivs)
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Dense `N x N` matrix `s_mn = int Psi_n'(t) Psi_m(t) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StiffnessMatrix {
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: data.len() });
        }
        Ok(Self { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `s_mn`, 1-based.
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[(m - 1) * self.n + (n - 1)]
    }

    /// Row `m` (1-based) as a slice over `n`.
    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[(m - 1) * self.n..m * self.n]
    }
}
