//! Nonlocal calculus driven by the fractional kernel `W_s`: gradient length,
//! fractional Laplacian, fractional p-Laplacian and the associated energies.
//!
//! Sign convention: `(−Δ)^s u(x) = (1/μ(x)) Σ_{y≠x} W_s(x,y) (u(x) − u(y))`,
//! which is the convention that makes `(−Δ)^s` a nonnegative operator and
//! coincides with the spectral definition `Σ_i λ_i^s ⟨u,φ_i⟩ φ_i`.

use nalgebra::DMatrix;

use crate::error::{check_len, check_open_unit, Error, Result};
use crate::graph::{Graph, VertexFunction};
use crate::spectral::SpectralDecomposition;
use crate::sum::CompensatedSum;

/// Default regularisation inside `|∇^s u|^{p−2}`.
pub const DEFAULT_EPS_REG: f64 = 1e-12;

/// `W_s` together with its exponent and graph.
#[derive(Debug, Clone)]
pub struct FractionalKernel {
    s: f64,
    weights: DMatrix<f64>,
    graph: Graph,
}

impl FractionalKernel {
    pub fn new(dec: &SpectralDecomposition, s: f64) -> Result<Self> {
        Ok(Self {
            s,
            weights: dec.kernel_weights(s)?,
            graph: dec.graph().clone(),
        })
    }

    /// Decomposes `graph` and builds the kernel in one go.
    pub fn from_graph(graph: &Graph, s: f64) -> Result<Self> {
        Self::new(&SpectralDecomposition::new(graph)?, s)
    }

    /// Wraps an externally computed kernel matrix. The diagonal is ignored.
    pub fn from_weights(graph: &Graph, s: f64, weights: DMatrix<f64>) -> Result<Self> {
        check_open_unit("s", s)?;
        let n = graph.n();
        if weights.nrows() != n || weights.ncols() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: weights.nrows(),
            });
        }
        Ok(Self {
            s,
            weights,
            graph: graph.clone(),
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    #[inline]
    fn w(&self, x: usize, y: usize) -> f64 {
        self.weights[(x, y)]
    }

    /// `∇^s u(x) · ∇^s v(x) = (1/(2μ(x))) Σ_{y≠x} W_s(x,y)(u(x)−u(y))(v(x)−v(y))`.
    pub fn gradient_inner(&self, u: &[f64], v: &[f64], x: usize) -> Result<f64> {
        check_len(self.n(), u.len())?;
        check_len(self.n(), v.len())?;
        Ok(self.gradient_inner_unchecked(u, v, x))
    }

    fn gradient_inner_unchecked(&self, u: &[f64], v: &[f64], x: usize) -> f64 {
        let mut acc = CompensatedSum::new();
        for y in 0..self.n() {
            if y != x {
                acc.add(self.w(x, y) * (u[x] - u[y]) * (v[x] - v[y]));
            }
        }
        acc.value() / (2.0 * self.graph.mu()[x])
    }

    /// `|∇^s u|(x)`.
    pub fn frac_gradient_norm(&self, u: &[f64], x: usize) -> Result<f64> {
        check_len(self.n(), u.len())?;
        Ok(self.gradient_inner_unchecked(u, u, x).max(0.0).sqrt())
    }

    /// `|∇^s u|` at every vertex.
    pub fn gradient_norms(&self, u: &[f64]) -> Result<VertexFunction> {
        check_len(self.n(), u.len())?;
        Ok((0..self.n())
            .map(|x| self.gradient_inner_unchecked(u, u, x).max(0.0).sqrt())
            .collect::<Vec<_>>()
            .into())
    }

    /// `(−Δ)^s u(x) = (1/μ(x)) Σ_{y≠x} W_s(x,y)(u(x) − u(y))`.
    pub fn frac_laplacian(&self, u: &[f64]) -> Result<VertexFunction> {
        check_len(self.n(), u.len())?;
        let mu = self.graph.mu();
        Ok((0..self.n())
            .map(|x| {
                let mut acc = CompensatedSum::new();
                for y in 0..self.n() {
                    if y != x {
                        acc.add(self.w(x, y) * (u[x] - u[y]));
                    }
                }
                acc.value() / mu[x]
            })
            .collect::<Vec<_>>()
            .into())
    }

    /// `g(x)^{p−2}` with `g² = |∇^s u|²(x) + eps²`; infinite when `g = 0` and `p < 2`.
    fn gradient_factors(&self, u: &[f64], p: f64, eps_reg: f64) -> Vec<f64> {
        let eps2 = eps_reg * eps_reg;
        (0..self.n())
            .map(|x| {
                let g2 = self.gradient_inner_unchecked(u, u, x).max(0.0) + eps2;
                g2.powf(0.5 * (p - 2.0))
            })
            .collect()
    }

    /// Fractional p-Laplacian
    /// `(1/(2μ(x))) Σ_{y≠x} (g(y)^{p−2} + g(x)^{p−2}) W_s(x,y)(u(x) − u(y))`
    /// with `g = (|∇^s u|² + eps_reg²)^{1/2}`.
    ///
    /// `p = 2` short-circuits to [`frac_laplacian`](Self::frac_laplacian).
    /// Pairs with `u(x) = u(y)` contribute nothing even when a factor is
    /// infinite (`0^{p−2} · 0 = 0`).
    pub fn frac_p_laplacian(&self, u: &[f64], p: f64, eps_reg: f64) -> Result<VertexFunction> {
        check_p(p)?;
        check_len(self.n(), u.len())?;
        if p == 2.0 {
            return self.frac_laplacian(u);
        }
        let factors = self.gradient_factors(u, p, eps_reg);
        Ok(self.p_laplacian_with_factors(u, &factors).into())
    }

    fn p_laplacian_with_factors(&self, u: &[f64], factors: &[f64]) -> Vec<f64> {
        let mu = self.graph.mu();
        (0..self.n())
            .map(|x| {
                let mut acc = CompensatedSum::new();
                for y in 0..self.n() {
                    let diff = u[x] - u[y];
                    let w = self.w(x, y);
                    if y == x || diff == 0.0 || w == 0.0 {
                        continue;
                    }
                    acc.add((factors[x] + factors[y]) * w * diff);
                }
                acc.value() / (2.0 * mu[x])
            })
            .collect()
    }

    /// `∫_V |∇^s u|^p dμ`.
    pub fn dirichlet_p_energy(&self, u: &[f64], p: f64) -> Result<f64> {
        let g = self.gradient_norms(u)?;
        Ok(self
            .graph
            .mu()
            .iter()
            .zip(g.iter())
            .map(|(m, g)| if p == 2.0 { g * g * m } else { g.powf(p) * m })
            .collect::<CompensatedSum>()
            .value())
    }

    /// `(‖∇^s u‖_p^p + ‖u‖_p^p)^{1/p}`.
    pub fn sobolev_norm(&self, u: &[f64], p: f64) -> Result<f64> {
        let grad = self.dirichlet_p_energy(u, p)?;
        let abs_p: Vec<f64> = u.iter().map(|v| v.abs().powf(p)).collect();
        let lp = self.graph.integrate(&abs_p)?;
        Ok((grad + lp).powf(1.0 / p))
    }

    /// `|∫ v (−Δ)_p^s u dμ − ∫ g^{p−2} ∇^s u · ∇^s v dμ|`, with the same
    /// regularised factors on both sides. Returns `(residual, lhs, rhs)`.
    pub fn ibp_terms(&self, u: &[f64], v: &[f64], p: f64, eps_reg: f64) -> Result<(f64, f64, f64)> {
        check_p(p)?;
        check_len(self.n(), u.len())?;
        check_len(self.n(), v.len())?;
        let lap = self.frac_p_laplacian(u, p, eps_reg)?;
        let lhs = self.graph.inner(v, &lap)?;
        let factors = if p == 2.0 {
            vec![1.0; self.n()]
        } else {
            self.gradient_factors(u, p, eps_reg)
        };
        let mu = self.graph.mu();
        let rhs = (0..self.n())
            .map(|x| {
                let inner = self.gradient_inner_unchecked(u, v, x);
                if inner == 0.0 {
                    0.0
                } else {
                    factors[x] * inner * mu[x]
                }
            })
            .collect::<CompensatedSum>()
            .value();
        Ok(((lhs - rhs).abs(), lhs, rhs))
    }

    pub fn ibp_residual(&self, u: &[f64], v: &[f64], p: f64, eps_reg: f64) -> Result<f64> {
        Ok(self.ibp_terms(u, v, p, eps_reg)?.0)
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::ExponentOutOfRange {
            name: "p",
            value: p,
            range: "(1, ∞)",
        })
    }
}
