//! Spectral calculus for `−Δ` on a weighted graph: eigendecomposition in the
//! μ-inner product, the heat kernel, and the fractional kernel `W_s`.
//!
//! `W_s` has two independent constructions here. [`SpectralDecomposition::kernel_weights`]
//! uses the closed form `W_s(x,y) = −μ(x)μ(y) Σ_i λ_i^s φ_i(x)φ_i(y)`;
//! [`SpectralDecomposition::kernel_weights_oracle`] integrates the heat kernel
//! against `t^{−1−s}` numerically. The two must agree.

use nalgebra::DMatrix;

use crate::error::{check_len, check_open_unit, Error, Result};
use crate::gamma::gamma;
use crate::graph::{Graph, VertexFunction};
use crate::jacobi::{jacobi_eigen, MAX_SWEEPS};
use crate::sum::CompensatedSum;

/// Smallest eigenvalue is snapped to zero when below this fraction of `λ_max`.
pub const GROUND_STATE_SNAP: f64 = 1e-10;

/// Kernel entries more negative than `−POSITIVITY_SLACK · max|W|` are rejected.
pub const POSITIVITY_SLACK: f64 = 1e-12;

/// Eigenpairs of `−Δ`, ascending, with μ-orthonormal eigenfunctions.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    graph: Graph,
    eigenvalues: Vec<f64>,
    /// Column `i` is `φ_i`.
    eigenfunctions: DMatrix<f64>,
}

impl SpectralDecomposition {
    /// Diagonalises the symmetric conjugate `S = M^{1/2} (−Δ) M^{−1/2}`
    /// (`M = diag μ`) with Jacobi rotations and maps back via `φ_i = μ^{−1/2} ψ_i`.
    pub fn decompose(graph: &Graph, tol: f64) -> Result<Self> {
        graph.ensure_valid()?;
        let n = graph.n();
        let mu = graph.mu();
        let sqrt_mu: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
        let s = DMatrix::from_fn(n, n, |x, y| {
            if x == y {
                graph.degree(x) / mu[x]
            } else {
                -graph.weight(x, y) / (sqrt_mu[x] * sqrt_mu[y])
            }
        });
        let eig = jacobi_eigen(&s, tol, MAX_SWEEPS)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.values[a].total_cmp(&eig.values[b]));

        let mut eigenvalues: Vec<f64> = order.iter().map(|&i| eig.values[i]).collect();
        let mut phi = DMatrix::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            for x in 0..n {
                phi[(x, col)] = eig.vectors[(x, i)] / sqrt_mu[x];
            }
            // sign: largest-magnitude entry positive (first one on ties)
            let mut pivot = 0;
            for x in 1..n {
                if phi[(x, col)].abs() > phi[(pivot, col)].abs() {
                    pivot = x;
                }
            }
            if phi[(pivot, col)] < 0.0 {
                phi.column_mut(col).neg_mut();
            }
        }

        let lambda_max = eigenvalues[n - 1];
        if eigenvalues[0].abs() < GROUND_STATE_SNAP * lambda_max {
            eigenvalues[0] = 0.0;
        } else {
            return Err(Error::GroundStateNotZero {
                value: eigenvalues[0],
                lambda_max,
            });
        }

        Ok(Self {
            graph: graph.clone(),
            eigenvalues,
            eigenfunctions: phi,
        })
    }

    /// [`decompose`](Self::decompose) with the default threshold.
    pub fn new(graph: &Graph) -> Result<Self> {
        Self::decompose(graph, crate::jacobi::DEFAULT_REL_TOL)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn phi(&self, i: usize, x: usize) -> f64 {
        self.eigenfunctions[(x, i)]
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Coefficients `⟨u, φ_i⟩_μ`.
    pub fn coefficients(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), u.len())?;
        let mu = self.graph.mu();
        Ok((0..self.n())
            .map(|i| {
                (0..self.n())
                    .map(|x| u[x] * self.phi(i, x) * mu[x])
                    .collect::<CompensatedSum>()
                    .value()
            })
            .collect())
    }

    /// `Σ_i f(λ_i) ⟨u, φ_i⟩_μ φ_i`.
    pub fn apply_function(&self, u: &[f64], f: impl Fn(f64) -> f64) -> Result<VertexFunction> {
        let c = self.coefficients(u)?;
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        Ok((0..self.n())
            .map(|x| {
                (0..self.n())
                    .map(|i| fl[i] * c[i] * self.phi(i, x))
                    .collect::<CompensatedSum>()
                    .value()
            })
            .collect::<Vec<_>>()
            .into())
    }

    /// `h(t,x,y) = Σ_i e^{−λ_i t} φ_i(x) φ_i(y)`.
    pub fn heat_kernel(&self, t: f64, x: usize, y: usize) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        Ok((0..self.n())
            .map(|i| (-self.eigenvalues[i] * t).exp() * self.phi(i, x) * self.phi(i, y))
            .collect::<CompensatedSum>()
            .value())
    }

    pub fn heat_kernel_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        let n = self.n();
        let mut h = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in x..n {
                let v = self.heat_kernel(t, x, y)?;
                h[(x, y)] = v;
                h[(y, x)] = v;
            }
        }
        Ok(h)
    }

    /// `−μ(x)μ(y) Σ_i λ_i^s φ_i(x) φ_i(y)` for all `x ≠ y`, diagonal zero,
    /// with no range or sign checks. Accepts `s = 1`, where the result
    /// reproduces the edge weights.
    pub fn power_kernel(&self, s: f64) -> DMatrix<f64> {
        let n = self.n();
        let mu = self.graph.mu();
        // λ_0 = 0 exactly, so its term vanishes for every s > 0
        let lam_s: Vec<f64> = self.eigenvalues.iter().map(|&l| if l == 0.0 { 0.0 } else { l.powf(s) }).collect();
        let mut w = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in x + 1..n {
                let sum = (1..n)
                    .map(|i| lam_s[i] * self.phi(i, x) * self.phi(i, y))
                    .collect::<CompensatedSum>()
                    .value();
                let v = -mu[x] * mu[y] * sum;
                w[(x, y)] = v;
                w[(y, x)] = v;
            }
        }
        w
    }

    /// Fractional kernel `W_s` from the spectral closed form. Fails if any
    /// off-diagonal entry is non-positive beyond round-off.
    pub fn kernel_weights(&self, s: f64) -> Result<DMatrix<f64>> {
        check_open_unit("s", s)?;
        let w = self.power_kernel(s);
        check_positive(&w)?;
        Ok(w)
    }

    /// Fractional kernel from the heat-kernel integral
    /// `W_s(x,y) = (s/Γ(1−s)) μ(x)μ(y) ∫_0^∞ h(t,x,y) t^{−1−s} dt`.
    ///
    /// For `x ≠ y`, `h(t,x,y) = Σ_i (e^{−λ_i t} − 1) φ_i(x)φ_i(y)`, and the finite
    /// sum is exchanged with the integral, so each nonzero eigenvalue needs one
    /// scalar integral `∫_0^∞ (1 − e^{−λt}) t^{−1−s} dt`.
    pub fn kernel_weights_oracle(&self, s: f64, cfg: &QuadratureConfig) -> Result<DMatrix<f64>> {
        check_open_unit("s", s)?;
        let n = self.n();
        let mu = self.graph.mu();
        let scale = s / gamma(1.0 - s)?;
        let moments = self.eigenvalues[1..]
            .iter()
            .map(|&l| cfg.integrate(l, s))
            .collect::<Result<Vec<_>>>()?;
        let mut w = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in x + 1..n {
                let sum = (1..n)
                    .map(|i| moments[i - 1] * self.phi(i, x) * self.phi(i, y))
                    .collect::<CompensatedSum>()
                    .value();
                let v = -scale * mu[x] * mu[y] * sum;
                w[(x, y)] = v;
                w[(y, x)] = v;
            }
        }
        Ok(w)
    }

    /// `(−Δ)^s u = Σ_i λ_i^s ⟨u, φ_i⟩_μ φ_i`.
    pub fn fractional_laplacian_spectral(&self, s: f64, u: &[f64]) -> Result<VertexFunction> {
        check_open_unit("s", s)?;
        self.apply_function(u, |l| if l == 0.0 { 0.0 } else { l.powf(s) })
    }
}

fn check_positive(w: &DMatrix<f64>) -> Result<()> {
    let n = w.nrows();
    let scale = w.amax();
    for x in 0..n {
        for y in 0..n {
            if x != y {
                let v = w[(x, y)];
                if v.is_nan() || v < -POSITIVITY_SLACK * scale || (v <= 0.0 && scale == 0.0) {
                    return Err(Error::PositivityViolation { x, y, value: v });
                }
            }
        }
    }
    Ok(())
}

/// Log-substituted composite Simpson rule for
/// `∫_0^∞ (1 − e^{−λt}) t^{−1−s} dt`: with `t = e^τ` the integrand becomes
/// `(1 − e^{−λe^τ}) e^{−sτ}` on `[tau_min, tau_max]`. Both truncated tails are
/// added in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub tau_min: f64,
    pub tau_max: f64,
    /// Number of Simpson panels; must be even.
    pub panels: usize,
    /// Maximum relative difference between the `panels` and `panels/2` rules.
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            tau_min: -40.0,
            tau_max: 40.0,
            panels: 8192,
            rel_tol: 1e-8,
        }
    }
}

impl QuadratureConfig {
    fn simpson(&self, lambda: f64, s: f64, panels: usize) -> f64 {
        let h = (self.tau_max - self.tau_min) / panels as f64;
        let f = |tau: f64| -(-lambda * tau.exp()).exp_m1() * (-s * tau).exp();
        let mut acc = CompensatedSum::new();
        acc.add(f(self.tau_min));
        acc.add(f(self.tau_max));
        for k in 1..panels {
            let wgt = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc.add(wgt * f(self.tau_min + k as f64 * h));
        }
        acc.value() * h / 3.0
    }

    /// `∫_0^{t0} (1 − e^{−λt}) t^{−1−s} dt = Σ_{k≥1} (−1)^{k+1} λ^k t0^{k−s} / (k! (k−s))`.
    fn lower_tail(&self, lambda: f64, s: f64) -> f64 {
        let t0 = self.tau_min.exp();
        let x = lambda * t0;
        let mut term = 1.0; // x^k / k!
        let mut acc = 0.0;
        for k in 1..60 {
            term *= x / k as f64;
            let add = term / (k as f64 - s);
            if k % 2 == 1 {
                acc += add
            } else {
                acc -= add
            }
            if add.abs() < 1e-18 * acc.abs() {
                break;
            }
        }
        acc * t0.powf(-s)
    }

    /// `∫_{t1}^∞ (1 − e^{−λt}) t^{−1−s} dt = t1^{−s}/s − ∫_{t1}^∞ e^{−λt} t^{−1−s} dt`;
    /// the second piece is bounded by `e^{−λ t1} t1^{−1−s} / λ` and returned separately.
    fn upper_tail(&self, lambda: f64, s: f64) -> (f64, f64) {
        let t1 = self.tau_max.exp();
        let main = t1.powf(-s) / s;
        let neglected = (-lambda * t1).exp() * t1.powf(-1.0 - s) / lambda;
        (main, neglected)
    }

    /// `∫_0^∞ (1 − e^{−λt}) t^{−1−s} dt`, which equals `Γ(1−s) λ^s / s`.
    pub fn integrate(&self, lambda: f64, s: f64) -> Result<f64> {
        if self.panels < 4 || self.panels % 2 != 0 || self.tau_min >= self.tau_max {
            return Err(Error::QuadratureNotConverged(format!("bad quadrature configuration {self:?}")));
        }
        if !(lambda > 0.0) {
            return Err(Error::QuadratureNotConverged(format!("eigenvalue {lambda} must be positive")));
        }
        let fine = self.simpson(lambda, s, self.panels);
        let coarse = self.simpson(lambda, s, self.panels / 2);
        let (upper, neglected) = self.upper_tail(lambda, s);
        let total = fine + self.lower_tail(lambda, s) + upper;
        let err = (fine - coarse).abs() / 15.0 + neglected;
        if !(err <= self.rel_tol * total.abs()) {
            return Err(Error::QuadratureNotConverged(format!(
                "λ = {lambda:e}, s = {s}: error estimate {err:e} vs integral {total:e}"
            )));
        }
        Ok(total)
    }

    /// `λ^s` recovered from the integral representation
    /// `λ^s = (s/Γ(1−s)) ∫_0^∞ (1 − e^{−λt}) t^{−1−s} dt`.
    pub fn power(&self, lambda: f64, s: f64) -> Result<f64> {
        check_open_unit("s", s)?;
        Ok(s / gamma(1.0 - s)? * self.integrate(lambda, s)?)
    }
}
