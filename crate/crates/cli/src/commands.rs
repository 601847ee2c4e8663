//! The five subcommands, as library functions returning structured results.
//! Writing and exit codes are left to the caller.

use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use siqrb_core::calibrate::{fit_beta, load_series, FitOptions, YEMEN_WEEKLY_CSV};
use siqrb_core::equilibria::{
    bifurcation_coefficients, classify_stability, BifurcationReport, EquilibriumReport,
};
use siqrb_core::integrate::{integrate_visit, region_violation, ControlInput, RegionVerdict};
use siqrb_core::model::{feasible_region, uptake_term, SystemState};
use siqrb_core::optctl::{
    forward_backward_sweep, peak_infective, treatment_end, OcpSolution, SweepOptions, SwitchSource,
    SwitchingRecord,
};
use siqrb_core::scenario::reference_horizon;
use siqrb_core::ScenarioConfig;

use crate::output::{csv_writer, format_float, write_row};
use crate::{read_input, CliError};

pub const SIMULATE_HEADER: [&str; 7] = ["t", "S", "I", "Q", "R", "B", "uptake"];
pub const CONTROL_HEADER: [&str; 13] = [
    "t", "u", "phi", "S", "I", "Q", "R", "B", "l1", "l2", "l3", "l4", "l5",
];
pub const SWEEP_HEADER: [&str; 5] = ["u_max", "T", "t_s", "I_peak", "J"];
pub const DEFAULT_UMAX_LIST: [f64; 4] = [0.2, 0.55, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub enum Control {
    Constant(f64),
    /// One value per grid node.
    Schedule(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub horizon: Option<f64>,
    pub control: Control,
    /// Keep every `stride`-th node; the last node is always kept.
    pub stride: usize,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            control: Control::Constant(0.0),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationRow {
    pub t: f64,
    pub state: SystemState,
    pub uptake: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub rows: Vec<SimulationRow>,
    pub verdict: RegionVerdict,
    pub final_state: SystemState,
    /// Time and height of the infective peak over all nodes.
    pub peak: (f64, f64),
}

pub fn simulate(cfg: &ScenarioConfig, opts: &SimulateOptions) -> Result<Simulation, CliError> {
    if opts.stride == 0 {
        return Err(CliError::Input("stride must be at least 1".into()));
    }
    let p = cfg.params().map_err(|e| CliError::Input(e.to_string()))?;
    let grid = cfg.grid_for(opts.horizon.unwrap_or(cfg.horizon_days))?;
    let control = match &opts.control {
        Control::Constant(u) => ControlInput::Constant(*u),
        Control::Schedule(values) => ControlInput::Schedule(values),
    };
    let region = feasible_region(&p);
    let last = grid.n_steps();
    let mut rows = Vec::with_capacity(last / opts.stride + 2);
    let mut verdict = RegionVerdict::Inside;
    let mut peak = (0.0, f64::NEG_INFINITY);
    let final_state = integrate_visit(&p, cfg.initial(), control, &grid, |k, t, x| {
        if k % opts.stride == 0 || k == last {
            rows.push(SimulationRow {
                t,
                state: *x,
                uptake: uptake_term(x, &p),
            });
        }
        if x.i > peak.1 {
            peak = (t, x.i);
        }
        if verdict.is_inside() {
            if let Some(violation) = region_violation(x, &region) {
                verdict = RegionVerdict::Outside {
                    node: k,
                    time: t,
                    violation,
                };
            }
        }
    })?;
    Ok(Simulation {
        rows,
        verdict,
        final_state,
        peak,
    })
}

pub fn write_simulation<W: Write>(sim: &Simulation, out: W) -> io::Result<()> {
    let mut w = csv_writer(out, &SIMULATE_HEADER)?;
    for row in &sim.rows {
        let x = row.state;
        write_row(&mut w, &[row.t, x.s, x.i, x.q, x.r, x.b, row.uptake])?;
    }
    w.flush()
}

/// Reads a control schedule: one value per line, `#` comments and an
/// optional `u` header line.
pub fn load_schedule(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = read_input(path)?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (values.is_empty() && line == "u") {
            continue;
        }
        let v = line.parse().map_err(|_| {
            CliError::Input(format!(
                "{}:{}: `{line}` is not a number",
                path.display(),
                idx + 1
            ))
        })?;
        values.push(v);
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BifurcationOutcome {
    Report(BifurcationReport),
    Unavailable { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriaOutput {
    pub equilibria: EquilibriumReport,
    pub bifurcation: BifurcationOutcome,
}

pub fn equilibria(cfg: &ScenarioConfig) -> Result<EquilibriaOutput, CliError> {
    let p = cfg.params().map_err(|e| CliError::Input(e.to_string()))?;
    let report =
        classify_stability(&p).map_err(|e| CliError::NotConverged(format!("eigenvalues: {e}")))?;
    let bifurcation = match bifurcation_coefficients(&p) {
        Ok(b) => BifurcationOutcome::Report(b),
        Err(e) => BifurcationOutcome::Unavailable {
            error: e.to_string(),
        },
    };
    Ok(EquilibriaOutput {
        equilibria: report,
        bifurcation,
    })
}

fn state_line(x: &SystemState) -> String {
    SystemState::NAMES
        .iter()
        .zip(x.to_array())
        .map(|(n, v)| format!("{n}={}", format_float(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn equilibria_text(out: &EquilibriaOutput) -> String {
    let r = &out.equilibria;
    let mut s = format!(
        "R0 = {}\na1 = {}  a2 = {}  a3 = {}\nDFE: {}\n  {:?}, stable: {}\n",
        format_float(r.r0),
        format_float(r.a1),
        format_float(r.a2),
        format_float(r.a3),
        state_line(&r.dfe),
        r.dfe_stability,
        r.dfe_stable
    );
    match (&r.ee, &r.ee_stability) {
        (Some(ee), Some(stab)) => s += &format!("EE:  {}\n  {stab:?}\n", state_line(ee)),
        _ => {
            let why = r
                .ee_infeasibility
                .map(|e| e.to_string())
                .unwrap_or_default();
            s += &format!("EE:  none ({why})\n");
        }
    }
    match &out.bifurcation {
        BifurcationOutcome::Report(b) => {
            s += &format!(
                "beta* = {}  a = {}  b = {}  forward: {}\n",
                format_float(b.beta_star),
                format_float(b.a_coeff),
                format_float(b.b_coeff),
                b.forward
            )
        }
        BifurcationOutcome::Unavailable { error } => s += &format!("bifurcation: {error}\n"),
    }
    s
}

/// Horizon for a control run: explicit value, then the reference horizon for
/// that bound, then the config.
pub fn control_horizon(cfg: &ScenarioConfig, u_max: f64, horizon: Option<f64>) -> f64 {
    horizon
        .or_else(|| reference_horizon(u_max))
        .unwrap_or(cfg.horizon_days)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSummary {
    pub u_max: f64,
    pub horizon: f64,
    pub t_s: Option<f64>,
    pub t_s_source: Option<SwitchSource>,
    pub phi_slope: Option<f64>,
    #[serde(rename = "J")]
    pub cost: f64,
    #[serde(rename = "I_peak")]
    pub i_peak: f64,
    pub t_peak: f64,
    pub converged: bool,
    pub iterations: usize,
    pub switches: Vec<SwitchingRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlRun {
    pub summary: ControlSummary,
    pub solution: OcpSolution,
}

/// Solves the optimal control problem. A sweep that hits its iteration cap
/// is returned with `converged = false`, not as an error.
pub fn control(
    cfg: &ScenarioConfig,
    u_max: Option<f64>,
    horizon: Option<f64>,
    opts: &SweepOptions,
) -> Result<ControlRun, CliError> {
    let u_max = u_max.unwrap_or(cfg.values.u_max);
    let p = cfg
        .params()
        .and_then(|p| p.modify(|v| v.u_max = u_max))
        .map_err(|e| CliError::Input(e.to_string()))?;
    let horizon = control_horizon(cfg, u_max, horizon);
    let grid = cfg.grid_for(horizon)?;
    let solution = forward_backward_sweep(&p, cfg.initial(), &grid, opts)?;
    let switch = treatment_end(&solution, u_max);
    let (t_peak, i_peak) = peak_infective(&solution.state_traj);
    let summary = ControlSummary {
        u_max,
        horizon,
        t_s: switch.map(|s| s.t_switch),
        t_s_source: switch.map(|s| s.source),
        phi_slope: switch.and_then(|s| s.phi_slope),
        cost: solution.cost,
        i_peak,
        t_peak,
        converged: solution.converged,
        iterations: solution.iterations,
        switches: solution.switching.clone(),
    };
    Ok(ControlRun { summary, solution })
}

pub fn write_control<W: Write>(sol: &OcpSolution, stride: usize, out: W) -> io::Result<()> {
    let mut w = csv_writer(out, &CONTROL_HEADER)?;
    let grid = sol.state_traj.grid;
    let last = grid.n_steps();
    for k in (0..=last).filter(|k| k % stride.max(1) == 0 || *k == last) {
        let x = sol.state_traj.states[k];
        let l = sol.adjoint_traj[k];
        write_row(
            &mut w,
            &[
                grid.time(k),
                sol.control[k],
                sol.switching_fn[k],
                x.s,
                x.i,
                x.q,
                x.r,
                x.b,
                l.l1,
                l.l2,
                l.l3,
                l.l4,
                l.l5,
            ],
        )?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub u_max: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub t_s: Option<f64>,
    #[serde(rename = "I_peak")]
    pub i_peak: f64,
    #[serde(rename = "J")]
    pub cost: f64,
    pub converged: bool,
}

/// One control solve per bound, run in parallel; rows come back sorted by
/// `u_max`.
pub fn sweep(cfg: &ScenarioConfig, u_max_list: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    if u_max_list.is_empty() {
        return Err(CliError::Input("empty u_max list".into()));
    }
    let mut list = u_max_list.to_vec();
    list.sort_by(f64::total_cmp);
    list.par_iter()
        .map(|&u| {
            let run = control(cfg, Some(u), None, &SweepOptions::default())?;
            Ok(SweepRow {
                u_max: u,
                horizon: run.summary.horizon,
                t_s: run.summary.t_s,
                i_peak: run.summary.i_peak,
                cost: run.summary.cost,
                converged: run.summary.converged,
            })
        })
        .collect()
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> io::Result<()> {
    let mut w = csv_writer(out, &SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            format_float(r.u_max),
            format_float(r.horizon),
            r.t_s.map(format_float).unwrap_or_default(),
            format_float(r.i_peak),
            format_float(r.cost),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub series: String,
    pub observations: usize,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub n_grid: usize,
    pub beta_hat: f64,
    pub sse: f64,
    pub evaluations: usize,
    /// `beta` of the loaded scenario, for comparison.
    pub beta_config: f64,
}

/// Fits `beta` to a case series (the bundled Yemen series by default).
pub fn fit(
    cfg: &ScenarioConfig,
    data: Option<&Path>,
    range: Option<(f64, f64)>,
    n_grid: Option<usize>,
) -> Result<FitReport, CliError> {
    let text = match data {
        Some(path) => read_input(path)?,
        None => YEMEN_WEEKLY_CSV.to_string(),
    };
    let series = load_series(text.as_bytes())?;
    let p = cfg.params().map_err(|e| CliError::Input(e.to_string()))?;
    let mut opts = FitOptions {
        grid_density: cfg.grid_density,
        ..FitOptions::default()
    };
    if let Some((lo, hi)) = range {
        opts.beta_lo = lo;
        opts.beta_hi = hi;
    }
    if let Some(n) = n_grid {
        opts.n_grid = n;
    }
    let result = fit_beta(&series, &p, cfg.initial(), &opts)?;
    Ok(FitReport {
        series: series.label.clone(),
        observations: series.observations().len(),
        beta_lo: opts.beta_lo,
        beta_hi: opts.beta_hi,
        n_grid: opts.n_grid,
        beta_hat: result.beta_hat,
        sse: result.sse,
        evaluations: result.evaluations,
        beta_config: cfg.values.beta,
    })
}
