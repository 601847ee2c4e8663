//! Weekly case-count ingestion and least-squares fitting of the ingestion
//! rate `beta`.
//!
//! Series files are UTF-8 text: a `t_days,cases` header, one observation per
//! line, and `#` comment lines anywhere. A comment of the form
//! `# label: <text>` names the series.

use std::io::{self, BufRead, Write};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{
    integrate_forward, ControlInput, GridError, IntegrateError, TimeGrid, Trajectory,
};
use crate::model::{ModelError, ModelParams, SystemState};

pub const HEADER: &str = "t_days,cases";

/// Bundled weekly Yemen case counts.
pub const YEMEN_WEEKLY_CSV: &str = include_str!("../data/yemen_weekly.csv");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub cases: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicSeries {
    pub label: String,
    observations: Vec<Observation>,
}

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: time {t} does not increase")]
    NonMonotone { line: usize, t: f64 },
    #[error("line {line}: negative case count {cases}")]
    NegativeCount { line: usize, cases: f64 },
    #[error("series has no observations")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl EpidemicSeries {
    /// Validates ordering and signs; line numbers in errors are 1-based
    /// observation indices.
    pub fn new(
        label: impl Into<String>,
        observations: Vec<Observation>,
    ) -> Result<Self, SeriesError> {
        if observations.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (k, obs) in observations.iter().enumerate() {
            check_observation(k + 1, obs, k.checked_sub(1).map(|j| observations[j].t))?;
        }
        Ok(Self {
            label: label.into(),
            observations,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.t).collect()
    }
}

fn check_observation(
    line: usize,
    obs: &Observation,
    previous: Option<f64>,
) -> Result<(), SeriesError> {
    if !obs.t.is_finite() || !obs.cases.is_finite() {
        return Err(SeriesError::Malformed {
            line,
            message: "non-finite value".into(),
        });
    }
    if previous.is_some_and(|t| obs.t <= t) {
        return Err(SeriesError::NonMonotone { line, t: obs.t });
    }
    if obs.cases < 0.0 {
        return Err(SeriesError::NegativeCount {
            line,
            cases: obs.cases,
        });
    }
    Ok(())
}

/// Parses a series; errors carry the 1-based line number in the input.
pub fn load_series<R: BufRead>(source: R) -> Result<EpidemicSeries, SeriesError> {
    let mut label = String::new();
    let mut seen_header = false;
    let mut observations: Vec<Observation> = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if let Some(comment) = text.strip_prefix('#') {
            if let Some(rest) = comment.trim_start().strip_prefix("label:") {
                label = rest.trim().to_string();
            }
            continue;
        }
        if text.is_empty() {
            continue;
        }
        if !seen_header {
            let fields: Vec<&str> = text.split(',').map(str::trim).collect();
            if fields != ["t_days", "cases"] {
                return Err(SeriesError::Malformed {
                    line: line_no,
                    message: format!("expected header `{HEADER}`, found `{text}`"),
                });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let [t, cases] = fields[..] else {
            return Err(SeriesError::Malformed {
                line: line_no,
                message: format!("expected 2 fields, found {}", fields.len()),
            });
        };
        let parse = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| SeriesError::Malformed {
                line: line_no,
                message: format!("cannot parse {what} `{s}`"),
            })
        };
        let obs = Observation {
            t: parse(t, "time")?,
            cases: parse(cases, "case count")?,
        };
        check_observation(line_no, &obs, observations.last().map(|o| o.t))?;
        observations.push(obs);
    }
    if observations.is_empty() {
        return Err(SeriesError::Empty);
    }
    Ok(EpidemicSeries {
        label,
        observations,
    })
}

pub fn write_series<W: Write>(series: &EpidemicSeries, mut out: W) -> io::Result<()> {
    if !series.label.is_empty() {
        writeln!(out, "# label: {}", series.label)?;
    }
    writeln!(out, "{HEADER}")?;
    for obs in &series.observations {
        writeln!(out, "{},{}", obs.t, obs.cases)?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("time {t} outside trajectory span [{t0}, {tf}]")]
    OutOfSpan { t: f64, t0: f64, tf: f64 },
    #[error("invalid search range [{lo}, {hi}] with {n_grid} grid points")]
    BadRange { lo: f64, hi: f64, n_grid: usize },
    #[error("no candidate beta could be integrated")]
    AllCandidatesFailed,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Infective count at `times`, by linear interpolation between nodes.
///
/// Under a quasi-steady infective class, `I ~ C / (delta + alpha1 + mu)`
/// with `C` the incidence rate; with a fast quarantine rate the divisor is
/// close to 1, so `I(t)` is compared to cases per time unit directly.
pub fn model_cases(traj: &Trajectory, times: &[f64]) -> Result<Vec<f64>, CalibrateError> {
    let grid = traj.grid;
    let (t0, tf) = (grid.t0(), grid.tf());
    let h = grid.step();
    times
        .iter()
        .map(|&t| {
            if !(t >= t0 && t <= tf) {
                return Err(CalibrateError::OutOfSpan { t, t0, tf });
            }
            let pos = (t - t0) / h;
            let k = (pos.floor() as usize).min(grid.n_steps() - 1);
            let frac = (pos - k as f64).clamp(0.0, 1.0);
            let (a, b) = (traj.states[k].i, traj.states[k + 1].i);
            Ok(if frac == 0.0 { a } else { a + frac * (b - a) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub n_grid: usize,
    /// Integration nodes per day.
    pub grid_density: f64,
    /// Absolute width at which golden-section refinement stops.
    pub beta_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            beta_lo: 0.005,
            beta_hi: 0.05,
            n_grid: 46,
            grid_density: 100.0,
            beta_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: f64,
    pub sse: f64,
    pub evaluations: usize,
}

fn horizon_grid(t_last: f64, density: f64) -> Result<TimeGrid, GridError> {
    TimeGrid::with_density(0.0, t_last.max(1.0 / density), density)
}

/// Sum of squared differences between model `I(t)` and observed cases.
pub fn sse(
    series: &EpidemicSeries,
    p: &ModelParams,
    x0: SystemState,
    grid: &TimeGrid,
) -> Result<f64, CalibrateError> {
    let traj = integrate_forward(p, x0, ControlInput::Constant(0.0), grid)?;
    let model = model_cases(&traj, &series.times())?;
    Ok(model
        .iter()
        .zip(series.observations())
        .map(|(m, o)| (m - o.cases).powi(2))
        .sum())
}

/// Model infective counts at the given times, as a series.
pub fn sample_model_series(
    p: &ModelParams,
    x0: SystemState,
    times: &[f64],
    density: f64,
    label: impl Into<String>,
) -> Result<EpidemicSeries, CalibrateError> {
    let grid = horizon_grid(times.last().copied().unwrap_or(0.0), density)?;
    let traj = integrate_forward(p, x0, ControlInput::Constant(0.0), &grid)?;
    let cases = model_cases(&traj, times)?;
    let observations = times
        .iter()
        .zip(cases)
        .map(|(&t, cases)| Observation { t, cases })
        .collect();
    Ok(EpidemicSeries::new(label, observations)?)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Fits `beta` by a grid scan of the SSE followed by golden-section
/// refinement around the best grid point. All other parameters stay fixed.
pub fn fit_beta(
    series: &EpidemicSeries,
    p: &ModelParams,
    x0: SystemState,
    opts: &FitOptions,
) -> Result<FitResult, CalibrateError> {
    let (lo, hi, n_grid) = (opts.beta_lo, opts.beta_hi, opts.n_grid);
    if !(lo > 0.0 && hi > lo && n_grid >= 3) {
        return Err(CalibrateError::BadRange { lo, hi, n_grid });
    }
    let t_last = series.observations.last().map_or(0.0, |o| o.t);
    let grid = horizon_grid(t_last, opts.grid_density)?;
    let objective = |beta: f64| -> Option<f64> {
        let candidate = p.modify(|v| v.beta = beta).ok()?;
        match sse(series, &candidate, x0, &grid) {
            Ok(v) if v.is_finite() => Some(v),
            Ok(_) | Err(CalibrateError::Integrate(_)) => {
                warn!("skipping beta = {beta}: integration failed");
                None
            }
            Err(_) => None,
        }
    };

    let step = (hi - lo) / (n_grid - 1) as f64;
    let betas: Vec<f64> = (0..n_grid)
        .map(|k| {
            if k == n_grid - 1 {
                hi
            } else {
                lo + k as f64 * step
            }
        })
        .collect();
    let scan: Vec<Option<f64>> = betas.par_iter().map(|&b| objective(b)).collect();
    let mut evaluations = n_grid;
    let (best_k, best_sse) = scan
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(CalibrateError::AllCandidatesFailed)?;

    let mut a = betas[best_k.saturating_sub(1)];
    let mut b = betas[(best_k + 1).min(n_grid - 1)];
    let eval = |beta: f64, count: &mut usize| {
        *count += 1;
        objective(beta).unwrap_or(f64::INFINITY)
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, &mut evaluations);
    let mut fd = eval(d, &mut evaluations);
    while (b - a).abs() > opts.beta_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, &mut evaluations);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, &mut evaluations);
        }
    }
    let (refined, refined_sse) = if fc < fd { (c, fc) } else { (d, fd) };
    let (beta_hat, sse) = if refined_sse <= best_sse {
        (refined, refined_sse)
    } else {
        (betas[best_k], best_sse)
    };
    Ok(FitResult {
        beta_hat,
        sse,
        evaluations,
    })
}
