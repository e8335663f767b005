//! Dormand–Prince 5(4) with local extrapolation, a max-norm error test and a
//! positivity guard. Steps never cross an output node, so every stored state
//! is an accepted integrator state.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// fifth-order weights (also row 7 of the tableau, FSAL)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub const SAFETY: f64 = 0.9;
pub const MIN_FACTOR: f64 = 0.2;
pub const MAX_FACTOR: f64 = 5.0;
/// Steps below `UNDERFLOW_FRACTION · horizon` abort the solve.
pub const UNDERFLOW_FRACTION: f64 = 1e-14;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub positivity_rejections: usize,
    pub rhs_evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

/// Result of one step attempt.
pub(crate) enum Attempt {
    Done {
        u_new: Vec<f64>,
        f_new: Vec<f64>,
        /// `max_i |err_i| / (atol + rtol ‖u‖∞)`; accept iff ≤ 1.
        err_ratio: f64,
        /// `max_i |err_i|`.
        err_abs: f64,
    },
    /// A stage or the new state left the positive cone.
    NonPositive,
}

/// Right-hand side `du/dt = f(t, u)` writing into `out`. Must return
/// [`Error::NonPositiveState`] when `u` is not strictly positive.
pub trait Rhs {
    fn eval(&mut self, t: f64, u: &[f64], out: &mut [f64]) -> Result<()>;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&mut self, t: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        self(t, u, out)
    }
}

pub(crate) struct Dopri5<R> {
    rhs: R,
    tol: Tolerances,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    pub stats: StepStats,
}

fn axpy_into(out: &mut [f64], u: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = u[i] + h * acc;
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl<R: Rhs> Dopri5<R> {
    pub fn new(rhs: R, n: usize, tol: Tolerances) -> Self {
        Self {
            rhs,
            tol,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            stats: StepStats::default(),
        }
    }

    /// Evaluates the right-hand side, mapping positivity failures to `Ok(false)`.
    fn eval(rhs: &mut R, stats: &mut StepStats, t: f64, u: &[f64], out: &mut [f64]) -> Result<bool> {
        stats.rhs_evaluations += 1;
        match rhs.eval(t, u, out) {
            Ok(()) => Ok(true),
            Err(Error::NonPositiveState { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    pub fn eval_rhs(&mut self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; u.len()];
        self.stats.rhs_evaluations += 1;
        self.rhs.eval(t, u, &mut out)?;
        Ok(out)
    }

    /// One attempt from `(t, u)` with derivative `f0 = f(t, u)` and step `h`.
    pub fn attempt(&mut self, t: f64, u: &[f64], f0: &[f64], h: f64) -> Result<Attempt> {
        let Self { rhs, k, tmp, stats, tol } = self;
        let [k1, k2, k3, k4, k5, k6, k7] = k;
        k1.copy_from_slice(f0);

        axpy_into(tmp, u, h, &[(A21, k1)]);
        if !Self::eval(rhs, stats, t + C2 * h, tmp, k2)? {
            return Ok(Attempt::NonPositive);
        }
        axpy_into(tmp, u, h, &[(A31, k1), (A32, k2)]);
        if !Self::eval(rhs, stats, t + C3 * h, tmp, k3)? {
            return Ok(Attempt::NonPositive);
        }
        axpy_into(tmp, u, h, &[(A41, k1), (A42, k2), (A43, k3)]);
        if !Self::eval(rhs, stats, t + C4 * h, tmp, k4)? {
            return Ok(Attempt::NonPositive);
        }
        axpy_into(tmp, u, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
        if !Self::eval(rhs, stats, t + C5 * h, tmp, k5)? {
            return Ok(Attempt::NonPositive);
        }
        axpy_into(tmp, u, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
        if !Self::eval(rhs, stats, t + h, tmp, k6)? {
            return Ok(Attempt::NonPositive);
        }
        let mut u_new = vec![0.0; u.len()];
        axpy_into(&mut u_new, u, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
        if u_new.iter().any(|v| !(*v > 0.0)) {
            return Ok(Attempt::NonPositive);
        }
        if !Self::eval(rhs, stats, t + h, &u_new, k7)? {
            return Ok(Attempt::NonPositive);
        }

        let mut err_abs: f64 = 0.0;
        for i in 0..u.len() {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err_abs = err_abs.max(e.abs());
        }
        let scale = tol.atol + tol.rtol * sup_norm(u);
        Ok(Attempt::Done {
            f_new: k7.clone(),
            u_new,
            err_ratio: err_abs / scale,
            err_abs,
        })
    }

    /// Initial step guess (Hairer, Nørsett & Wanner, II.4).
    pub fn initial_step(&mut self, t: f64, u: &[f64], f0: &[f64], max_h: f64) -> Result<f64> {
        let sc: Vec<f64> = u.iter().map(|v| self.tol.atol + self.tol.rtol * v.abs()).collect();
        let norm = |v: &[f64]| v.iter().zip(&sc).fold(0.0f64, |m, (a, s)| m.max((a / s).abs()));
        let d0 = norm(u);
        let d1 = norm(f0);
        if d1 <= 1e-15 {
            return Ok(max_h);
        }
        let h0 = if d0 <= 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(max_h);
        let probe: Vec<f64> = u.iter().zip(f0).map(|(u, f)| u + h0 * f).collect();
        self.stats.rhs_evaluations += 1;
        let mut f1 = vec![0.0; u.len()];
        let d2 = match self.rhs.eval(t + h0, &probe, &mut f1) {
            Ok(()) => {
                let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
                norm(&diff) / h0
            }
            Err(Error::NonPositiveState { .. }) => return Ok(h0 * 0.5),
            Err(e) => return Err(e),
        };
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1).min(max_h))
    }
}

/// Step-size factor after an error ratio `err` (fifth-order controller).
pub(crate) fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        MAX_FACTOR
    } else {
        (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
    }
}

/// Integrates from `u0` at `grid[0]` and returns the state at every grid node.
pub(crate) fn integrate_on_grid<R: Rhs>(
    rhs: R,
    u0: &[f64],
    grid: &[f64],
    tol: Tolerances,
) -> Result<(Vec<Vec<f64>>, StepStats)> {
    let horizon = grid[grid.len() - 1] - grid[0];
    let min_h = UNDERFLOW_FRACTION * horizon;
    let mut solver = Dopri5::new(rhs, u0.len(), tol);

    let mut t = grid[0];
    let mut u = u0.to_vec();
    let mut f = solver.eval_rhs(t, &u)?;
    let mut states = Vec::with_capacity(grid.len());
    states.push(u.clone());
    let mut h = solver.initial_step(t, &u, &f, grid.get(1).map_or(horizon, |t1| t1 - t))?;

    for &node in &grid[1..] {
        while t < node {
            let remaining = node - t;
            let landing = h >= remaining * (1.0 - 1e-12);
            let h_try = if landing { remaining } else { h };
            match solver.attempt(t, &u, &f, h_try)? {
                Attempt::Done {
                    u_new,
                    f_new,
                    err_ratio,
                    ..
                } if err_ratio <= 1.0 => {
                    solver.stats.accepted += 1;
                    t = if landing { node } else { t + h_try };
                    u = u_new;
                    f = f_new;
                    let proposal = h_try * step_factor(err_ratio);
                    // a short landing step should not throttle the next one
                    h = if landing { proposal.max(h) } else { proposal };
                }
                Attempt::Done { err_ratio, .. } => {
                    solver.stats.rejected += 1;
                    h = h_try * step_factor(err_ratio).min(1.0);
                }
                Attempt::NonPositive => {
                    solver.stats.rejected += 1;
                    solver.stats.positivity_rejections += 1;
                    h = 0.5 * h_try;
                }
            }
            if h < min_h {
                return Err(Error::StepSizeUnderflow { t, dt: h });
            }
        }
        states.push(u.clone());
    }
    Ok((states, solver.stats))
}
