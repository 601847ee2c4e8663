//! Fixed-step RK4 integration and invariant-region checks.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    check_control, feasible_region, rhs, uptake_term, FeasibleRegion, ModelError, ModelParams,
    SystemState, Vector5, DIM,
};

/// Undershoot below `-NEGATIVE_SLACK * cap` counts as a real negative value.
pub const NEGATIVE_SLACK: f64 = 1e-9;
/// Relative slack on the upper caps of the invariant region.
pub const CAP_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("final time {tf} must exceed start time {t0}")]
    EmptySpan { t0: f64, tf: f64 },
    #[error("grid needs at least one step")]
    NoSteps,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("control schedule has {got} values, grid has {expected} nodes")]
    ScheduleLength { got: usize, expected: usize },
    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },
}

/// Uniform grid `t0 = t_0 < t_1 < ... < t_n = tf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    tf: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, tf: f64, n_steps: usize) -> Result<Self, GridError> {
        if !(tf > t0) {
            return Err(GridError::EmptySpan { t0, tf });
        }
        if n_steps == 0 {
            return Err(GridError::NoSteps);
        }
        Ok(Self { t0, tf, n_steps })
    }

    /// Grid with `density` nodes per unit time (rounded, at least one step).
    pub fn with_density(t0: f64, tf: f64, density: f64) -> Result<Self, GridError> {
        let n = ((tf - t0) * density).round().max(1.0);
        Self::new(t0, tf, n as usize)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        (self.tf - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.tf
        } else {
            self.t0 + k as f64 * self.step()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|k| self.time(k))
    }
}

/// Control applied during integration.
#[derive(Debug, Clone, Copy)]
pub enum ControlInput<'a> {
    Constant(f64),
    /// One value per grid node; step `k` uses the value at node `k`.
    Schedule(&'a [f64]),
}

impl ControlInput<'_> {
    fn at(&self, k: usize) -> f64 {
        match self {
            ControlInput::Constant(u) => *u,
            ControlInput::Schedule(values) => values[k],
        }
    }

    fn materialize(&self, n_nodes: usize) -> Vec<f64> {
        (0..n_nodes).map(|k| self.at(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<SystemState>,
    pub controls: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> SystemState {
        *self
            .states
            .last()
            .expect("trajectory has at least one node")
    }

    /// Values of one component (0 = S, ..., 4 = B) along the trajectory.
    pub fn component(&self, idx: usize) -> Vec<f64> {
        self.states.iter().map(|x| x.to_array()[idx]).collect()
    }
}

/// One classical RK4 step of size `h` (negative for backward steps).
///
/// `f` receives the stage offset within the step (0, 1/2 or 1) so callers
/// with tabulated coefficients can pick the matching node.
#[inline]
pub(crate) fn rk4_step<F>(y: &Vector5, h: f64, mut f: F) -> Vector5
where
    F: FnMut(f64, &Vector5) -> Vector5,
{
    let axpy = |a: f64, k: &Vector5| -> Vector5 {
        let mut out = *y;
        for i in 0..DIM {
            out[i] += a * k[i];
        }
        out
    };
    let k1 = f(0.0, y);
    let k2 = f(0.5, &axpy(0.5 * h, &k1));
    let k3 = f(0.5, &axpy(0.5 * h, &k2));
    let k4 = f(1.0, &axpy(h, &k3));
    let mut out = *y;
    for i in 0..DIM {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrates the (controlled) model over `grid` with fixed-step RK4.
///
/// The control is piecewise constant: the value at node `k` is held on
/// `[t_k, t_{k+1})`.
pub fn integrate_forward(
    p: &ModelParams,
    x0: SystemState,
    control: ControlInput<'_>,
    grid: &TimeGrid,
) -> Result<Trajectory, IntegrateError> {
    let mut states = Vec::with_capacity(grid.n_nodes());
    integrate_visit(p, x0, control, grid, |_, _, x| states.push(*x))?;
    Ok(Trajectory {
        grid: *grid,
        states,
        controls: Some(control.materialize(grid.n_nodes())),
    })
}

/// Same integration as [`integrate_forward`], handing each node to `visit`
/// as `(k, t_k, x_k)` instead of storing it. Returns the final state.
pub fn integrate_visit<F>(
    p: &ModelParams,
    x0: SystemState,
    control: ControlInput<'_>,
    grid: &TimeGrid,
    mut visit: F,
) -> Result<SystemState, IntegrateError>
where
    F: FnMut(usize, f64, &SystemState),
{
    x0.validate()?;
    let n_nodes = grid.n_nodes();
    if let ControlInput::Schedule(values) = control {
        if values.len() != n_nodes {
            return Err(IntegrateError::ScheduleLength {
                got: values.len(),
                expected: n_nodes,
            });
        }
    }
    for k in 0..n_nodes {
        check_control(control.at(k), p)?;
    }

    let region = feasible_region(p);
    let floor = [
        region.human_cap,
        region.human_cap,
        region.human_cap,
        region.human_cap,
        region.bacteria_cap.max(f64::MIN_POSITIVE),
    ]
    .map(|cap| -NEGATIVE_SLACK * cap);

    let h = grid.step();
    let mut y = x0.to_array();
    visit(0, grid.t0(), &x0);
    for k in 0..grid.n_steps() {
        let u = control.at(k);
        y = rk4_step(&y, h, |_, z| rhs(&SystemState::from_array(*z), u, p));
        let time = grid.time(k + 1);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFinite { time });
        }
        for (i, v) in y.iter_mut().enumerate() {
            if *v < floor[i] {
                warn!(
                    "clamping {} = {:e} to zero at t = {}",
                    SystemState::NAMES[i],
                    *v,
                    time
                );
                *v = 0.0;
            }
        }
        visit(k + 1, time, &SystemState::from_array(y));
    }
    Ok(SystemState::from_array(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionViolation {
    Negative { component: &'static str, value: f64 },
    HumansAboveCap { total: f64, cap: f64 },
    BacteriaAboveCap { value: f64, cap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RegionVerdict {
    Inside,
    Outside {
        node: usize,
        time: f64,
        violation: RegionViolation,
    },
}

impl RegionVerdict {
    pub fn is_inside(&self) -> bool {
        matches!(self, RegionVerdict::Inside)
    }
}

/// Checks every node against the positively invariant region, with small
/// numerical slack. Reports the first offending node.
pub fn check_invariant_region(traj: &Trajectory, p: &ModelParams) -> RegionVerdict {
    let region = feasible_region(p);
    for (node, x) in traj.states.iter().enumerate() {
        if let Some(violation) = region_violation(x, &region) {
            return RegionVerdict::Outside {
                node,
                time: traj.grid.time(node),
                violation,
            };
        }
    }
    RegionVerdict::Inside
}

/// First way in which `x` leaves `region`, if any.
pub fn region_violation(x: &SystemState, region: &FeasibleRegion) -> Option<RegionViolation> {
    let caps = [
        region.human_cap,
        region.human_cap,
        region.human_cap,
        region.human_cap,
        region.bacteria_cap,
    ];
    for ((name, value), cap) in SystemState::NAMES.iter().zip(x.to_array()).zip(caps) {
        if !(value >= -NEGATIVE_SLACK * cap) {
            return Some(RegionViolation::Negative {
                component: name,
                value,
            });
        }
    }
    let total = x.humans();
    if total > region.human_cap * (1.0 + CAP_SLACK) {
        return Some(RegionViolation::HumansAboveCap {
            total,
            cap: region.human_cap,
        });
    }
    if x.b > region.bacteria_cap * (1.0 + CAP_SLACK) {
        return Some(RegionViolation::BacteriaAboveCap {
            value: x.b,
            cap: region.bacteria_cap,
        });
    }
    None
}

/// Bacteria removed by susceptible uptake at each node.
pub fn uptake_term_series(traj: &Trajectory, p: &ModelParams) -> Vec<f64> {
    traj.states.iter().map(|x| uptake_term(x, p)).collect()
}
