//! Pontryagin necessary conditions for the tablet-distribution problem and
//! a forward-backward sweep solver.
//!
//! The problem is
//!
//! ```text
//! minimize  J(u) = ∫₀ᵀ beta S B / (kappa + B) (1 - u) + c u  dt
//! subject to the controlled dynamics,  0 <= u(t) <= u_max.
//! ```
//!
//! The Hamiltonian is affine in `u`, so extremals are bang-bang and the
//! control is the sign of the switching function `phi = dH/du`.

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{
    integrate_forward, rk4_step, ControlInput, IntegrateError, TimeGrid, Trajectory,
};
use crate::model::{infection_flux, rhs, running_cost, ModelParams, SystemState, Vector5, DIM};

/// Costates paired with `(S, I, Q, R, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdjointState {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
}

impl AdjointState {
    pub fn to_array(self) -> Vector5 {
        [self.l1, self.l2, self.l3, self.l4, self.l5]
    }

    pub fn from_array(l: Vector5) -> Self {
        Self {
            l1: l[0],
            l2: l[1],
            l3: l[2],
            l4: l[3],
            l5: l[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("u_max = {0} leaves no control authority; need 0 < u_max <= 1")]
    NoControlAuthority(f64),
    #[error("control schedule has {got} values, trajectory has {expected} nodes")]
    ScheduleLength { got: usize, expected: usize },
    #[error("costate became non-finite at t = {time}")]
    NonFiniteAdjoint { time: f64 },
    #[error("singular arc: |phi| ~ 0 on [{start}, {end}]")]
    SingularArc { start: f64, end: f64 },
}

pub fn hamiltonian(x: &SystemState, u: f64, l: &AdjointState, p: &ModelParams) -> f64 {
    let f = rhs(x, u, p);
    running_cost(x, u, p)
        + l.to_array()
            .iter()
            .zip(f)
            .map(|(li, fi)| li * fi)
            .sum::<f64>()
}

/// Costate dynamics `dl/dt = -dH/dx`.
pub fn adjoint_rhs(x: &SystemState, l: &AdjointState, u: f64, p: &ModelParams) -> Vector5 {
    adjoint_field(x, &l.to_array(), u, p)
}

#[inline]
fn adjoint_field(x: &SystemState, l: &Vector5, u: f64, p: &ModelParams) -> Vector5 {
    let kb = p.kappa + x.b;
    let bracket = p.beta * (l[0] - l[1] - 1.0) * (1.0 - u) + p.rho * l[4];
    [
        x.b / kb * bracket + p.mu * l[0],
        p.a1() * l[1] - p.delta * l[2] - p.eta * l[4],
        p.a2() * l[2] - p.epsilon * l[3],
        -p.omega * l[0] + p.a3() * l[3],
        p.kappa * x.s / (kb * kb) * bracket + p.d * l[4],
    ]
}

/// `phi = c + beta S B / (kappa + B) (l1 - l2 - 1)`.
pub fn switching_function(x: &SystemState, l: &AdjointState, p: &ModelParams) -> f64 {
    p.c + infection_flux(x, p) * (l.l1 - l.l2 - 1.0)
}

/// Minimizer of the Hamiltonian over `[0, u_max]`. Ties (`phi = 0`) go to
/// `u_max`.
pub fn control_update(phi: f64, u_max: f64) -> f64 {
    if phi > 0.0 {
        0.0
    } else {
        u_max
    }
}

fn check_schedule(traj: &Trajectory, u: &[f64]) -> Result<(), OptError> {
    if u.len() != traj.states.len() {
        return Err(OptError::ScheduleLength {
            got: u.len(),
            expected: traj.states.len(),
        });
    }
    Ok(())
}

/// Costates on the state grid, integrated backward from `l(T) = 0`.
///
/// Step `k` runs from `t_{k+1}` down to `t_k` with the control held at its
/// node-`k` value, as in the forward pass. Stage states are the stored nodes
/// at the step ends and their average at the midpoint.
pub fn integrate_adjoint_backward(
    traj: &Trajectory,
    u: &[f64],
    p: &ModelParams,
) -> Result<Vec<AdjointState>, OptError> {
    check_schedule(traj, u)?;
    let grid = traj.grid;
    let n = grid.n_steps();
    let h = grid.step();
    let mut out = vec![[0.0; DIM]; n + 1];
    let mut l = [0.0; DIM];
    for k in (0..n).rev() {
        let right = traj.states[k + 1];
        let left = traj.states[k];
        let mid = {
            let (a, b) = (left.to_array(), right.to_array());
            SystemState::from_array(std::array::from_fn(|i| 0.5 * (a[i] + b[i])))
        };
        let uk = u[k];
        l = rk4_step(&l, -h, |theta, y| {
            let x = if theta == 0.0 {
                &right
            } else if theta == 1.0 {
                &left
            } else {
                &mid
            };
            adjoint_field(x, y, uk, p)
        });
        if l.iter().any(|v| !v.is_finite()) {
            return Err(OptError::NonFiniteAdjoint { time: grid.time(k) });
        }
        out[k] = l;
    }
    Ok(out.into_iter().map(AdjointState::from_array).collect())
}

/// Composite trapezoidal quadrature of the running cost.
pub fn cost(traj: &Trajectory, u: &[f64], p: &ModelParams) -> Result<f64, OptError> {
    check_schedule(traj, u)?;
    Ok(trapezoid_cost(traj, u, p))
}

fn trapezoid_cost(traj: &Trajectory, u: &[f64], p: &ModelParams) -> f64 {
    let h = traj.grid.step();
    let n = traj.states.len() - 1;
    let inner: f64 = (1..n).map(|k| running_cost(&traj.states[k], u[k], p)).sum();
    let ends = running_cost(&traj.states[0], u[0], p) + running_cost(&traj.states[n], u[n], p);
    h * (inner + 0.5 * ends)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchDirection {
    /// `phi` crosses upward: the control drops from `u_max` to 0.
    MaxToZero,
    ZeroToMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingRecord {
    pub t_switch: f64,
    /// `dphi/dt` at the crossing.
    pub phi_slope: f64,
    pub direction: SwitchDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OcpSolution {
    pub control: Vec<f64>,
    pub state_traj: Trajectory,
    pub adjoint_traj: Vec<AdjointState>,
    /// Switching function at each node.
    pub switching_fn: Vec<f64>,
    pub cost: f64,
    pub switching: Vec<SwitchingRecord>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Weight of the new control in `u <- theta u_new + (1 - theta) u_old`.
    pub damping: f64,
    pub max_iterations: usize,
    /// Control tolerance relative to `u_max`.
    pub control_tol: f64,
    /// Relative change in cost between iterations.
    pub cost_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iterations: 500,
            control_tol: 1e-6,
            cost_tol: 1e-8,
        }
    }
}

struct Evaluation {
    traj: Trajectory,
    adjoint: Vec<AdjointState>,
    phi: Vec<f64>,
    cost: f64,
}

fn evaluate(
    p: &ModelParams,
    x0: SystemState,
    grid: &TimeGrid,
    u: &[f64],
) -> Result<Evaluation, OptError> {
    let traj = integrate_forward(p, x0, ControlInput::Schedule(u), grid)?;
    let adjoint = integrate_adjoint_backward(&traj, u, p)?;
    let phi = traj
        .states
        .iter()
        .zip(&adjoint)
        .map(|(x, l)| switching_function(x, l, p))
        .collect();
    let cost = trapezoid_cost(&traj, u, p);
    Ok(Evaluation {
        traj,
        adjoint,
        phi,
        cost,
    })
}

fn bang(phi: &[f64], u_max: f64) -> Vec<f64> {
    phi.iter().map(|&f| control_update(f, u_max)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn solution(u: Vec<f64>, eval: Evaluation, converged: bool, iterations: usize) -> OcpSolution {
    let switching = switching_records(&eval.traj.grid, &eval.phi);
    let mut state_traj = eval.traj;
    state_traj.controls = Some(u.clone());
    OcpSolution {
        control: u,
        state_traj,
        adjoint_traj: eval.adjoint,
        switching_fn: eval.phi,
        cost: eval.cost,
        switching,
        converged,
        iterations,
    }
}

/// Minimal consecutive run of `|phi| < 1e-6 c` nodes reported as singular.
pub const SINGULAR_RUN: usize = 5;

fn find_singular_arc(grid: &TimeGrid, phi: &[f64], c: f64) -> Option<(f64, f64)> {
    let tol = 1e-6 * c;
    let mut run_start = None;
    for (k, f) in phi.iter().enumerate() {
        if f.abs() < tol {
            let start = *run_start.get_or_insert(k);
            if k + 1 - start >= SINGULAR_RUN {
                let end = phi[k..].iter().take_while(|v| v.abs() < tol).count() + k - 1;
                return Some((grid.time(start), grid.time(end)));
            }
        } else {
            run_start = None;
        }
    }
    None
}

/// Forward-backward sweep on the state/costate system.
///
/// Each iteration integrates the state forward with the current control,
/// the costates backward, and moves the control toward the bang-bang law
/// with damping. Once the iteration settles, the control is snapped to the
/// pure bang-bang law; the snapped control is returned when it reproduces
/// itself. Past the iteration cap the lowest-cost iterate is returned with
/// `converged = false`.
pub fn forward_backward_sweep(
    p: &ModelParams,
    x0: SystemState,
    grid: &TimeGrid,
    opts: &SweepOptions,
) -> Result<OcpSolution, OptError> {
    if !(p.u_max > 0.0 && p.u_max <= 1.0) {
        return Err(OptError::NoControlAuthority(p.u_max));
    }
    let u_max = p.u_max;
    let theta = opts.damping;
    let mut u = vec![0.0; grid.n_nodes()];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut prev_cost: Option<f64> = None;

    for iteration in 1..=opts.max_iterations {
        let eval = evaluate(p, x0, grid, &u)?;
        if best.as_ref().is_none_or(|(_, j)| eval.cost < *j) {
            best = Some((u.clone(), eval.cost));
        }
        let target = bang(&eval.phi, u_max);
        let residual = max_abs_diff(&target, &u);
        let cost_settled = prev_cost.is_some_and(|j| {
            (eval.cost - j).abs() <= opts.cost_tol * j.abs().max(f64::MIN_POSITIVE)
        });
        let control_settled = residual <= opts.control_tol * u_max;
        debug!(
            "sweep iteration {iteration}: J = {}, control change {residual}",
            eval.cost
        );

        if control_settled || cost_settled {
            let snapped = evaluate(p, x0, grid, &target)?;
            let result = if bang(&snapped.phi, u_max) == target {
                solution(target, snapped, true, iteration)
            } else {
                solution(u, eval, control_settled, iteration)
            };
            if let Some((start, end)) = find_singular_arc(grid, &result.switching_fn, p.c) {
                return Err(OptError::SingularArc { start, end });
            }
            return Ok(result);
        }

        prev_cost = Some(eval.cost);
        for (ui, ti) in u.iter_mut().zip(&target) {
            *ui = theta * ti + (1.0 - theta) * *ui;
        }
    }

    let (u_best, _) = best.expect("at least one iteration ran");
    let eval = evaluate(p, x0, grid, &u_best)?;
    Ok(solution(u_best, eval, false, opts.max_iterations))
}

fn switching_records(grid: &TimeGrid, phi: &[f64]) -> Vec<SwitchingRecord> {
    let mut records = Vec::new();
    let mut last: Option<usize> = None;
    for (k, &f) in phi.iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        if let Some(j) = last {
            let a = phi[j];
            if a.signum() != f.signum() {
                let (ta, tb) = (grid.time(j), grid.time(k));
                let slope = (f - a) / (tb - ta);
                records.push(SwitchingRecord {
                    t_switch: ta + a / (a - f) * (tb - ta),
                    phi_slope: slope,
                    direction: if slope > 0.0 {
                        SwitchDirection::MaxToZero
                    } else {
                        SwitchDirection::ZeroToMax
                    },
                });
            }
        }
        last = Some(k);
    }
    records
}

/// Sign changes of the switching function, located by linear interpolation
/// between the bracketing nodes. The slope is the difference quotient over
/// the bracketing cell.
pub fn detect_switching(solution: &OcpSolution) -> Vec<SwitchingRecord> {
    switching_records(&solution.state_traj.grid, &solution.switching_fn)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchSource {
    /// A sign change of the switching function.
    SignChange,
    /// The control stays at `u_max` up to the horizon.
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSwitch {
    pub t_switch: f64,
    pub phi_slope: Option<f64>,
    pub source: SwitchSource,
}

/// Time at which treatment stops: the first detected switch, or the horizon
/// when the control is at `u_max` throughout.
pub fn treatment_end(solution: &OcpSolution, u_max: f64) -> Option<ControlSwitch> {
    if let Some(r) = solution.switching.first() {
        return Some(ControlSwitch {
            t_switch: r.t_switch,
            phi_slope: Some(r.phi_slope),
            source: SwitchSource::SignChange,
        });
    }
    if solution.control.iter().all(|&u| u == u_max) {
        return Some(ControlSwitch {
            t_switch: solution.state_traj.grid.tf(),
            phi_slope: None,
            source: SwitchSource::Horizon,
        });
    }
    None
}

/// Time and height of the largest infective count, earliest on ties.
pub fn peak_infective(traj: &Trajectory) -> (f64, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, x) in traj.states.iter().enumerate() {
        if x.i > best.1 {
            best = (k, x.i);
        }
    }
    (traj.grid.time(best.0), best.1)
}
