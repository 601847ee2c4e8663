//! Scenario configuration: parameters, initial condition and time grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{GridError, TimeGrid};
use crate::model::{ModelError, ModelParams, ParamValues, SystemState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("grid_density must be >= 1, got {0}")]
    GridDensity(f64),
}

fn default_density() -> f64 {
    100.0
}

/// Flat key-value scenario description, as stored in JSON config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub label: String,
    /// Free-text provenance note, e.g. how `lambda` was evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    #[serde(flatten)]
    pub values: ParamValues,
    #[serde(rename = "S0")]
    pub s0: f64,
    #[serde(rename = "I0")]
    pub i0: f64,
    #[serde(rename = "Q0")]
    pub q0: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "B0")]
    pub b0: f64,
    pub horizon_days: f64,
    /// Grid nodes per day.
    #[serde(default = "default_density")]
    pub grid_density: f64,
}

impl ScenarioConfig {
    /// The 2017-2018 Yemen outbreak scenario.
    pub fn yemen() -> Self {
        let (s0, i0, q0, r0, b0) = (28_249_670.0, 750.0, 0.0, 0.0, 275e3);
        let n0 = s0 + i0 + q0 + r0;
        Self {
            label: "Yemen cholera outbreak, 27 April 2017 - 15 April 2018".into(),
            comment: Some(
                "lambda = 28.4 * N(0) / 365000 with N(0) = S0 + I0 + Q0 + R0 = 28250420".into(),
            ),
            values: ParamValues {
                lambda: 28.4 * n0 / 365_000.0,
                mu: 1.6e-5,
                beta: 0.01891,
                kappa: 1e7,
                omega: 0.4 / 365.0,
                delta: 1.15,
                epsilon: 0.2,
                alpha1: 6e-6,
                alpha2: 3e-6,
                eta: 10.0,
                d: 0.33,
                rho: 0.01891,
                c: 1.0,
                u_max: 0.2,
            },
            s0,
            i0,
            q0,
            r0,
            b0,
            horizon_days: 354.0,
            grid_density: 100.0,
        }
    }

    pub fn params(&self) -> Result<ModelParams, ModelError> {
        ModelParams::new(self.values)
    }

    pub fn initial(&self) -> SystemState {
        SystemState::new(self.s0, self.i0, self.q0, self.r0, self.b0)
    }

    pub fn grid(&self) -> Result<TimeGrid, ScenarioError> {
        self.grid_for(self.horizon_days)
    }

    /// Grid on `[0, horizon]` at this scenario's node density.
    pub fn grid_for(&self, horizon: f64) -> Result<TimeGrid, ScenarioError> {
        if !(self.grid_density >= 1.0) {
            return Err(ScenarioError::GridDensity(self.grid_density));
        }
        Ok(TimeGrid::with_density(0.0, horizon, self.grid_density)?)
    }

    /// Validates parameters, initial condition and grid together.
    pub fn validate(&self) -> Result<(ModelParams, SystemState, TimeGrid), ScenarioError> {
        let params = self.params()?;
        let x0 = self.initial();
        x0.validate()?;
        Ok((params, x0, self.grid()?))
    }
}

/// Horizon used for each of the reference control scenarios; `None` for
/// other bounds.
pub fn reference_horizon(u_max: f64) -> Option<f64> {
    const TABLE: [(f64, f64); 4] = [(0.20, 354.0), (0.55, 100.0), (0.90, 70.0), (0.95, 70.0)];
    TABLE
        .iter()
        .find(|(u, _)| (u - u_max).abs() < 1e-12)
        .map(|&(_, t)| t)
}
