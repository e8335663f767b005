//! Post-processing of computed trajectories against the estimates the flow
//! must satisfy: mass conservation, the maximum principle, the energy identity
//! `(q/(q+1))∫u(T)^{q+1} + ∫_0^T∫|∇^s u|^p = (q/(q+1))∫u_0^{q+1}`, the
//! dissipation bound `∫_0^T∫(u^{(q−1)/2}∂_t u)² ≤ (1/(pq))∫|∇^s u_0|^p`, and
//! decay of the gradient energy.
//!
//! Time integrals use the composite trapezoid rule on the output grid, and
//! `∂_t u` is always the right-hand side re-evaluated at a stored state.
//! The dissipation integral runs over `[0, T]` only; its integrand is
//! nonnegative, so truncation can only make the inequality easier.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{rhs_direct, steady_state, Trajectory, BOUND_SLACK};
use crate::graph::Graph;
use crate::operators::FractionalKernel;
use crate::sum::CompensatedSum;

/// `∫_V u^q dμ`.
pub fn mass(graph: &Graph, u: &[f64], q: f64) -> Result<f64> {
    if q.fract() != 0.0 {
        if let Some(vertex) = u.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::NonPositiveState { vertex, value: u[vertex] });
        }
    }
    let powered: Vec<f64> = u.iter().map(|v| v.powf(q)).collect();
    graph.integrate(&powered)
}

/// Composite trapezoid rule over (possibly non-uniform) nodes.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    assert_eq!(times.len(), values.len());
    let mut acc = CompensatedSum::new();
    for k in 1..times.len() {
        acc.add(0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]));
    }
    acc.value()
}

/// `∫_V |∇^s u(·,t)|^p dμ` at every grid time.
pub fn gradient_decay(traj: &Trajectory, kernel: &FractionalKernel, p: f64) -> Result<Vec<f64>> {
    traj.states
        .iter()
        .map(|st| kernel.dirichlet_p_energy(&st.u, p))
        .collect()
}

/// Terms of the energy identity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBalance {
    /// `(q/(q+1)) ∫ u(T)^{q+1} dμ`
    pub final_term: f64,
    /// `∫_0^T ∫ |∇^s u|^p dμ dt`
    pub dissipated: f64,
    /// `(q/(q+1)) ∫ u_0^{q+1} dμ`
    pub initial_term: f64,
}

impl EnergyBalance {
    /// `|LHS − RHS| / (|RHS| + 1)`.
    pub fn residual(&self) -> f64 {
        (self.final_term + self.dissipated - self.initial_term).abs() / (self.initial_term.abs() + 1.0)
    }
}

pub fn energy_balance(traj: &Trajectory, kernel: &FractionalKernel, p: f64, q: f64) -> Result<EnergyBalance> {
    let graph = kernel.graph();
    let c = q / (q + 1.0);
    let times: Vec<f64> = traj.times().collect();
    let energies = gradient_decay(traj, kernel, p)?;
    Ok(EnergyBalance {
        final_term: c * mass(graph, &traj.last().u, q + 1.0)?,
        dissipated: trapezoid(&times, &energies),
        initial_term: c * mass(graph, traj.initial(), q + 1.0)?,
    })
}

pub fn energy_identity_residual(traj: &Trajectory, kernel: &FractionalKernel, p: f64, q: f64) -> Result<f64> {
    Ok(energy_balance(traj, kernel, p, q)?.residual())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DissipationCheck {
    /// `∫_0^T ∫ (u^{(q−1)/2} ∂_t u)² dμ dt`
    pub lhs: f64,
    /// `(1/(pq)) ∫ |∇^s u_0|^p dμ`
    pub rhs: f64,
    pub satisfied: bool,
}

/// Relative slack of the dissipation inequality.
pub const DISSIPATION_SLACK: f64 = 1e-6;

/// `∫_V u^{q−1} (∂_t u)² dμ` at every grid time, with `∂_t u` from the
/// right-hand side of the direct system.
pub fn dissipation_rate(traj: &Trajectory, kernel: &FractionalKernel, p: f64, q: f64) -> Result<Vec<f64>> {
    let graph = kernel.graph();
    traj.states
        .iter()
        .map(|st| {
            let du = rhs_direct(kernel, &st.u, p, q, traj.config.eps_reg)?;
            let dens: Vec<f64> = st.u.iter().zip(du.iter()).map(|(u, d)| u.powf(q - 1.0) * d * d).collect();
            graph.integrate(&dens)
        })
        .collect()
}

pub fn dissipation_check(traj: &Trajectory, kernel: &FractionalKernel, p: f64, q: f64) -> Result<DissipationCheck> {
    let times: Vec<f64> = traj.times().collect();
    let lhs = trapezoid(&times, &dissipation_rate(traj, kernel, p, q)?);
    let rhs = kernel.dirichlet_p_energy(traj.initial(), p)? / (p * q);
    Ok(DissipationCheck {
        lhs,
        rhs,
        satisfied: lhs <= rhs + DISSIPATION_SLACK * (rhs + 1.0),
    })
}

/// `max_{t,x} max(min u0 − u(x,t), u(x,t) − max u0, 0)`.
pub fn max_principle_check(traj: &Trajectory, u0: &[f64]) -> f64 {
    let lo = u0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    traj.states
        .iter()
        .flat_map(|st| st.u.iter())
        .fold(0.0, |m: f64, &v| m.max(lo - v).max(v - hi))
}

/// `max_t |∫u(t)^q − ∫u_0^q| / ∫u_0^q`.
pub fn mass_drift(traj: &Trajectory, graph: &Graph, q: f64) -> Result<f64> {
    let m0 = mass(graph, traj.initial(), q)?;
    let mut worst: f64 = 0.0;
    for st in &traj.states {
        worst = worst.max((mass(graph, &st.u, q)? - m0).abs() / m0);
    }
    Ok(worst)
}

/// `‖u(T) − c‖∞` for the mass-matched constant `c`.
pub fn steady_state_error(traj: &Trajectory, graph: &Graph, q: f64) -> Result<f64> {
    let c = steady_state(graph, traj.initial(), q)?;
    Ok(traj.last().u.iter().fold(0.0, |m: f64, v| m.max((v - c).abs())))
}

/// `max_x |∂_t u(x, T)|`.
pub fn final_time_derivative(traj: &Trajectory, kernel: &FractionalKernel, p: f64, q: f64) -> Result<f64> {
    let du = rhs_direct(kernel, &traj.last().u, p, q, traj.config.eps_reg)?;
    Ok(du.sup_norm())
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub energy_identity_residual: f64,
    pub energy_balance: EnergyBalance,
    pub dissipation_lhs: f64,
    pub dissipation_rhs: f64,
    pub dissipation_satisfied: bool,
    pub mass_drift: f64,
    pub bound_violation: f64,
    pub initial_gradient_energy: f64,
    pub final_gradient_energy: f64,
    /// Largest increase of the gradient energy between consecutive grid times.
    pub gradient_energy_increase: f64,
    pub steady_state: f64,
    pub steady_state_error: f64,
    pub final_time_derivative: f64,
    pub horizon: f64,
}

impl DiagnosticsReport {
    pub fn compute(traj: &Trajectory, kernel: &FractionalKernel) -> Result<Self> {
        let (p, q) = (traj.config.p, traj.config.q);
        let graph = kernel.graph();
        let balance = energy_balance(traj, kernel, p, q)?;
        let diss = dissipation_check(traj, kernel, p, q)?;
        let decay = gradient_decay(traj, kernel, p)?;
        let increase = decay.windows(2).fold(0.0, |m: f64, w| m.max(w[1] - w[0]));
        Ok(Self {
            energy_identity_residual: balance.residual(),
            energy_balance: balance,
            dissipation_lhs: diss.lhs,
            dissipation_rhs: diss.rhs,
            dissipation_satisfied: diss.satisfied,
            mass_drift: mass_drift(traj, graph, q)?,
            bound_violation: max_principle_check(traj, traj.initial()),
            initial_gradient_energy: decay[0],
            final_gradient_energy: decay[decay.len() - 1],
            gradient_energy_increase: increase,
            steady_state: steady_state(graph, traj.initial(), q)?,
            steady_state_error: steady_state_error(traj, graph, q)?,
            final_time_derivative: final_time_derivative(traj, kernel, p, q)?,
            horizon: traj.config.horizon,
        })
    }

    /// Pass/fail verdicts against `thresholds`.
    pub fn checks(&self, thresholds: &Thresholds) -> Vec<Check> {
        let e0 = self.initial_gradient_energy;
        vec![
            Check::at_most("energy_identity", self.energy_identity_residual, thresholds.energy_identity),
            Check::at_most(
                "dissipation_bound",
                self.dissipation_lhs,
                self.dissipation_rhs + DISSIPATION_SLACK * (self.dissipation_rhs + 1.0),
            ),
            Check::at_most("max_principle", self.bound_violation, thresholds.bound),
            Check::at_most("mass_conservation", self.mass_drift, thresholds.mass),
            Check::at_most(
                "gradient_energy_decay",
                self.gradient_energy_increase,
                thresholds.decay * (e0 + 1.0),
            ),
        ]
    }
}

/// Thresholds for [`DiagnosticsReport::checks`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    /// Relative energy-identity residual.
    pub energy_identity: f64,
    /// Absolute maximum-principle excess.
    pub bound: f64,
    /// Relative mass drift.
    pub mass: f64,
    /// Allowed growth of the gradient energy between grid times, relative to `E_0 + 1`.
    pub decay: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            energy_identity: 1e-4,
            bound: BOUND_SLACK,
            mass: 1e-8,
            decay: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}
