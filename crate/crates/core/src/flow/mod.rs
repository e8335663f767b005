//! Time integration of `∂_t u^q + (−Δ)_p^s u = 0` for positive data.
//!
//! Expanding the time derivative gives the ODE system
//! `du/dt(x) = −(−Δ)_p^s u(x) / (q u(x)^{q−1})`, solved directly by
//! [`evolve_direct`]. [`picard_solve`] instead freezes the coefficient
//! `a = q u_prev^{q−1}` from the previous iterate and solves the resulting
//! equations [`solve_frozen`] until the iterates stop moving.

mod integrator;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_open_unit, Error, Result};
use crate::graph::{Graph, VertexFunction};
use crate::operators::{check_p, FractionalKernel, DEFAULT_EPS_REG};

pub use integrator::{StepStats, Tolerances, MAX_FACTOR, MIN_FACTOR, SAFETY, UNDERFLOW_FRACTION};
use integrator::{integrate_on_grid, step_factor, Attempt, Dopri5, Rhs};

/// Slack for the maximum-principle check on computed trajectories.
pub const BOUND_SLACK: f64 = 1e-9;
/// Default number of output intervals when `dt_out` is not given.
pub const DEFAULT_OUTPUT_INTERVALS: usize = 200;

fn default_tol() -> f64 {
    1e-9
}
fn default_eps_reg() -> f64 {
    DEFAULT_EPS_REG
}
fn default_picard_tol() -> f64 {
    1e-10
}
fn default_picard_max() -> usize {
    100
}

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub s: f64,
    pub p: f64,
    pub q: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Output grid spacing; `None` means `horizon / 200`.
    #[serde(default)]
    pub dt_out: Option<f64>,
    #[serde(default = "default_tol")]
    pub atol: f64,
    #[serde(default = "default_tol")]
    pub rtol: f64,
    #[serde(default = "default_eps_reg")]
    pub eps_reg: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max: usize,
}

impl FlowConfig {
    pub fn new(s: f64, p: f64, q: f64, horizon: f64) -> Self {
        Self {
            s,
            p,
            q,
            horizon,
            dt_out: None,
            atol: default_tol(),
            rtol: default_tol(),
            eps_reg: default_eps_reg(),
            picard_tol: default_picard_tol(),
            picard_max: default_picard_max(),
        }
    }

    pub fn with_dt_out(mut self, dt_out: f64) -> Self {
        self.dt_out = Some(dt_out);
        self
    }

    pub fn with_tolerances(mut self, atol: f64, rtol: f64) -> Self {
        self.atol = atol;
        self.rtol = rtol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("s", self.s)?;
        check_p(self.p)?;
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::ExponentOutOfRange {
                name: "q",
                value: self.q,
                range: "(0, ∞)",
            });
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("T", self.horizon)?;
        if let Some(dt) = self.dt_out {
            positive("dt_out", dt)?;
        }
        positive("atol", self.atol)?;
        if !(self.rtol >= 0.0 && self.rtol.is_finite()) {
            return Err(Error::InvalidConfig(format!("rtol must be nonnegative, got {}", self.rtol)));
        }
        if !(self.eps_reg >= 0.0 && self.eps_reg.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps_reg must be nonnegative, got {}", self.eps_reg)));
        }
        positive("picard_tol", self.picard_tol)?;
        if self.picard_max == 0 {
            return Err(Error::InvalidConfig("picard_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Uniform grid `0 = t_0 < … < t_K = T` with `K = ⌈T / dt_out⌉`, so the
    /// realised spacing is `T / K ≤ dt_out`.
    pub fn output_grid(&self) -> Vec<f64> {
        let intervals = match self.dt_out {
            None => DEFAULT_OUTPUT_INTERVALS,
            Some(dt) => ((self.horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize,
        };
        let mut grid: Vec<f64> = (0..=intervals)
            .map(|k| self.horizon * k as f64 / intervals as f64)
            .collect();
        grid[intervals] = self.horizon;
        grid
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances {
            atol: self.atol,
            rtol: self.rtol,
        }
    }

    fn check_kernel(&self, kernel: &FractionalKernel) -> Result<()> {
        self.validate()?;
        if kernel.s() != self.s {
            return Err(Error::InvalidConfig(format!(
                "kernel exponent s = {} differs from configured s = {}",
                kernel.s(),
                self.s
            )));
        }
        Ok(())
    }
}

/// The solution at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowState {
    pub t: f64,
    pub u: VertexFunction,
}

/// States on the uniform output grid.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
    pub step_stats: StepStats,
    pub config: FlowConfig,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.t)
    }

    pub fn initial(&self) -> &VertexFunction {
        &self.states[0].u
    }

    pub fn last(&self) -> &FlowState {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `max_k ‖u_k − other_k‖∞` over a common grid.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.len(), other.len(), "trajectories live on different grids");
        self.states
            .iter()
            .zip(&other.states)
            .fold(0.0, |m, (a, b)| m.max(a.u.sup_distance(&b.u)))
    }

    fn from_states(grid: &[f64], states: Vec<Vec<f64>>, stats: StepStats, config: FlowConfig) -> Self {
        Self {
            states: grid
                .iter()
                .zip(states)
                .map(|(&t, u)| FlowState { t, u: u.into() })
                .collect(),
            step_stats: stats,
            config,
        }
    }
}

/// Time-dependent coefficient `a(x, t)` sampled on an output grid and
/// linearly interpolated in between.
#[derive(Debug, Clone)]
pub struct FrozenCoefficient {
    times: Vec<f64>,
    samples: Vec<Vec<f64>>,
}

impl FrozenCoefficient {
    pub fn new(times: Vec<f64>, samples: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != samples.len() {
            return Err(Error::InvalidConfig("frozen coefficient needs one sample per grid time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("frozen coefficient times must increase".into()));
        }
        let n = samples[0].len();
        for row in &samples {
            check_len(n, row.len())?;
            if let Some((vertex, &value)) = row.iter().enumerate().find(|(_, a)| !(**a > 0.0 && a.is_finite())) {
                return Err(Error::InvalidConfig(format!(
                    "frozen coefficient a({vertex}) = {value} is not positive and finite"
                )));
            }
        }
        Ok(Self { times, samples })
    }

    /// `a = q u^{q−1}` along a trajectory.
    pub fn from_trajectory(traj: &Trajectory, q: f64) -> Result<Self> {
        let times = traj.times().collect();
        let samples = traj
            .states
            .iter()
            .map(|s| s.u.iter().map(|&u| q * u.powf(q - 1.0)).collect())
            .collect();
        Self::new(times, samples)
    }

    /// `a = q u0^{q−1}`, constant in time, on `grid`.
    pub fn stationary(grid: &[f64], u0: &[f64], q: f64) -> Result<Self> {
        let row: Vec<f64> = u0.iter().map(|&u| q * u.powf(q - 1.0)).collect();
        Self::new(grid.to_vec(), vec![row; grid.len()])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Largest sampled value.
    pub fn max_value(&self) -> f64 {
        self.samples.iter().flatten().fold(0.0, |m: f64, a| m.max(*a))
    }

    pub fn min_value(&self) -> f64 {
        self.samples.iter().flatten().fold(f64::INFINITY, |m: f64, a| m.min(*a))
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let last = self.times.len() - 1;
        if last == 0 || t <= self.times[0] {
            out.copy_from_slice(&self.samples[0]);
            return;
        }
        if t >= self.times[last] {
            out.copy_from_slice(&self.samples[last]);
            return;
        }
        // index of the segment [t_k, t_{k+1}) containing t
        let k = self.times.partition_point(|&tk| tk <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let theta = (t - t0) / (t1 - t0);
        for ((o, a0), a1) in out.iter_mut().zip(&self.samples[k]).zip(&self.samples[k + 1]) {
            *o = a0 + theta * (a1 - a0);
        }
    }

    /// `a(·, t)`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.samples[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Upper bound `C = q · max(max u0^{q−1}, min u0^{q−1})` on `q u^{q−1}` for any
/// `u` obeying the maximum principle.
pub fn coefficient_bound(u0: &[f64], q: f64) -> f64 {
    let lo = u0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    q * lo.powf(q - 1.0).max(hi.powf(q - 1.0))
}

fn check_positive_state(u: &[f64]) -> Result<()> {
    match u.iter().position(|v| !(*v > 0.0)) {
        Some(vertex) => Err(Error::NonPositiveState { vertex, value: u[vertex] }),
        None => Ok(()),
    }
}

enum Coefficient<'a> {
    Direct { q: f64 },
    Frozen(&'a FrozenCoefficient),
}

struct FlowRhs<'a> {
    kernel: &'a FractionalKernel,
    p: f64,
    eps_reg: f64,
    coefficient: Coefficient<'a>,
    scratch: Vec<f64>,
}

impl<'a> FlowRhs<'a> {
    fn new(kernel: &'a FractionalKernel, config: &FlowConfig, coefficient: Coefficient<'a>) -> Self {
        Self {
            kernel,
            p: config.p,
            eps_reg: config.eps_reg,
            coefficient,
            scratch: vec![0.0; kernel.n()],
        }
    }
}

impl Rhs for FlowRhs<'_> {
    fn eval(&mut self, t: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_positive_state(u)?;
        let lap = self.kernel.frac_p_laplacian(u, self.p, self.eps_reg)?;
        match self.coefficient {
            Coefficient::Direct { q } => {
                for ((o, l), u) in out.iter_mut().zip(lap.iter()).zip(u) {
                    *o = -l / (q * u.powf(q - 1.0));
                }
            }
            Coefficient::Frozen(a) => {
                a.eval_into(t, &mut self.scratch);
                for ((o, l), a) in out.iter_mut().zip(lap.iter()).zip(&self.scratch) {
                    *o = -l / a;
                }
            }
        }
        Ok(())
    }
}

/// `du/dt = −(−Δ)_p^s u / (q u^{q−1})`.
pub fn rhs_direct(kernel: &FractionalKernel, u: &[f64], p: f64, q: f64, eps_reg: f64) -> Result<VertexFunction> {
    check_len(kernel.n(), u.len())?;
    let mut rhs = FlowRhs {
        kernel,
        p,
        eps_reg,
        coefficient: Coefficient::Direct { q },
        scratch: Vec::new(),
    };
    let mut out = vec![0.0; u.len()];
    rhs.eval(0.0, u, &mut out)?;
    Ok(out.into())
}

/// Outcome of [`step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: FlowState,
    /// `max_x |local error estimate|` of the accepted step.
    pub error: f64,
    /// Step actually taken.
    pub dt: f64,
    /// Controller's proposal for the next step.
    pub dt_next: f64,
    pub stats: StepStats,
}

/// Advances `state` by one accepted embedded Runge–Kutta step, starting from
/// the trial step `dt` and shrinking it until the local error satisfies
/// `err ≤ atol + rtol ‖u‖∞`.
pub fn step(
    kernel: &FractionalKernel,
    state: &FlowState,
    dt: f64,
    config: &FlowConfig,
    frozen: Option<&FrozenCoefficient>,
) -> Result<StepOutcome> {
    config.check_kernel(kernel)?;
    check_len(kernel.n(), state.u.len())?;
    check_positive_state(&state.u)?;
    let coefficient = match frozen {
        Some(a) => Coefficient::Frozen(a),
        None => Coefficient::Direct { q: config.q },
    };
    let mut solver = Dopri5::new(FlowRhs::new(kernel, config, coefficient), kernel.n(), config.tolerances());
    let f0 = solver.eval_rhs(state.t, &state.u)?;
    let min_h = UNDERFLOW_FRACTION * config.horizon;
    let mut h = dt;
    loop {
        if !(h >= min_h) {
            return Err(Error::StepSizeUnderflow { t: state.t, dt: h });
        }
        match solver.attempt(state.t, &state.u, &f0, h)? {
            Attempt::Done {
                u_new,
                err_ratio,
                err_abs,
                ..
            } if err_ratio <= 1.0 => {
                solver.stats.accepted += 1;
                return Ok(StepOutcome {
                    state: FlowState {
                        t: state.t + h,
                        u: u_new.into(),
                    },
                    error: err_abs,
                    dt: h,
                    dt_next: h * step_factor(err_ratio),
                    stats: solver.stats,
                });
            }
            Attempt::Done { err_ratio, .. } => {
                solver.stats.rejected += 1;
                h *= step_factor(err_ratio).min(1.0);
            }
            Attempt::NonPositive => {
                solver.stats.rejected += 1;
                solver.stats.positivity_rejections += 1;
                h *= 0.5;
            }
        }
    }
}

/// Largest excess of the trajectory over `[min u0, max u0]`, with its location.
fn bound_excess(traj: &Trajectory) -> (f64, f64, usize) {
    let u0 = traj.initial();
    let (lo, hi) = (u0.min(), u0.max());
    let mut worst = (0.0, 0.0, 0);
    for st in &traj.states {
        for (x, &v) in st.u.iter().enumerate() {
            let e = (lo - v).max(v - hi);
            if e > worst.0 {
                worst = (e, st.t, x);
            }
        }
    }
    worst
}

fn enforce_bounds(traj: Trajectory) -> Result<Trajectory> {
    let (excess, t, vertex) = bound_excess(&traj);
    if excess > BOUND_SLACK {
        Err(Error::BoundViolation { t, vertex, excess })
    } else {
        Ok(traj)
    }
}

/// Solves the ODE system with coefficient `q u^{q−1}` on the output grid.
pub fn evolve_direct(kernel: &FractionalKernel, u0: &[f64], config: &FlowConfig) -> Result<Trajectory> {
    config.check_kernel(kernel)?;
    check_len(kernel.n(), u0.len())?;
    check_positive_state(u0)?;
    let grid = config.output_grid();
    let rhs = FlowRhs::new(kernel, config, Coefficient::Direct { q: config.q });
    let (states, stats) = integrate_on_grid(rhs, u0, &grid, config.tolerances())?;
    enforce_bounds(Trajectory::from_states(&grid, states, stats, *config))
}

/// Solves `a(x,t) ∂_t u + (−Δ)_p^s u = 0` for a given coefficient sampled on
/// the configured output grid.
pub fn solve_frozen(
    kernel: &FractionalKernel,
    a: &FrozenCoefficient,
    u0: &[f64],
    config: &FlowConfig,
) -> Result<Trajectory> {
    config.check_kernel(kernel)?;
    check_len(kernel.n(), u0.len())?;
    check_positive_state(u0)?;
    let grid = config.output_grid();
    if a.times() != grid.as_slice() {
        return Err(Error::InvalidConfig("frozen coefficient is not sampled on the output grid".into()));
    }
    check_len(kernel.n(), a.samples()[0].len())?;
    let rhs = FlowRhs::new(kernel, config, Coefficient::Frozen(a));
    let (states, stats) = integrate_on_grid(rhs, u0, &grid, config.tolerances())?;
    enforce_bounds(Trajectory::from_states(&grid, states, stats, *config))
}

/// Result of [`picard_solve`].
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub trajectory: Trajectory,
    pub iterations: usize,
    /// `history[k]` is the sup distance over the grid between iterate `k+1`
    /// and iterate `k`; iterate 0 is `u0` held constant in time.
    pub history: Vec<f64>,
}

/// Frozen-coefficient Picard iteration. The first iterate uses
/// `a = q u0^{q−1}`; each later one uses `a = q u_{n−1}^{q−1}` from the previous
/// trajectory. Stops once consecutive iterates differ by less than
/// `picard_tol` over the whole grid, or once the coefficient reproduces itself
/// exactly (then the next iterate would be identical).
pub fn picard_solve(kernel: &FractionalKernel, u0: &[f64], config: &FlowConfig) -> Result<PicardOutcome> {
    config.check_kernel(kernel)?;
    check_len(kernel.n(), u0.len())?;
    check_positive_state(u0)?;
    let grid = config.output_grid();
    let mut a = FrozenCoefficient::stationary(&grid, u0, config.q)?;
    let mut previous: Vec<Vec<f64>> = vec![u0.to_vec(); grid.len()];
    let mut history = Vec::new();
    let mut total = StepStats::default();

    for iteration in 1..=config.picard_max {
        let traj = solve_frozen(kernel, &a, u0, config)?;
        total.accepted += traj.step_stats.accepted;
        total.rejected += traj.step_stats.rejected;
        total.positivity_rejections += traj.step_stats.positivity_rejections;
        total.rhs_evaluations += traj.step_stats.rhs_evaluations;

        let dist = traj
            .states
            .iter()
            .zip(&previous)
            .fold(0.0, |m: f64, (st, prev)| m.max(st.u.sup_distance(prev)));
        history.push(dist);

        let next = FrozenCoefficient::from_trajectory(&traj, config.q)?;
        let fixed_point = next.samples() == a.samples();
        if dist < config.picard_tol || fixed_point {
            let mut trajectory = traj;
            trajectory.step_stats = total;
            return Ok(PicardOutcome {
                trajectory,
                iterations: iteration,
                history,
            });
        }
        previous = traj.states.into_iter().map(|s| s.u.into_vec()).collect();
        a = next;
    }
    Err(Error::PicardNotConverged {
        iterations: config.picard_max,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// The constant `c = (∫u0^q dμ / ∫1 dμ)^{1/q}` that carries the same mass
/// `∫u^q dμ` as `u0`; the long-time limit of the flow.
pub fn steady_state(graph: &Graph, u0: &[f64], q: f64) -> Result<f64> {
    check_len(graph.n(), u0.len())?;
    check_positive_state(u0)?;
    let powered: Vec<f64> = u0.iter().map(|u| u.powf(q)).collect();
    let mass = graph.integrate(&powered)?;
    let c = (mass / graph.volume()).powf(1.0 / q);
    // rounding can push c a hair outside [min u0, max u0]
    let lo = u0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(c.clamp(lo, hi))
}

#[cfg(test)]
mod tests;
