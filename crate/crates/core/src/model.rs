//! Parameters, state, and the SIQRB vector fields.
//!
//! State ordering everywhere in the crate is `(S, I, Q, R, B)`: susceptible,
//! infective, quarantined and recovered humans, then the free bacteria
//! concentration in the water reservoir.

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of state components.
pub const DIM: usize = 5;

/// A plain 5-vector in state ordering.
pub type Vector5 = [f64; DIM];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` = {value} violates {rule}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
    #[error("state component `{name}` = {value} must be finite and non-negative")]
    InvalidState { name: &'static str, value: f64 },
    #[error("control {u} outside admissible range [0, {u_max}]")]
    ControlOutOfRange { u: f64, u_max: f64 },
}

/// Raw parameter values. Construct a [`ModelParams`] from these to get a
/// validated, immutable record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamValues {
    /// Recruitment rate (person/day).
    pub lambda: f64,
    /// Natural death rate (1/day).
    pub mu: f64,
    /// Ingestion rate (1/day).
    pub beta: f64,
    /// Half-saturation constant (cell/ml).
    pub kappa: f64,
    /// Immunity waning rate (1/day).
    pub omega: f64,
    /// Quarantine rate (1/day).
    pub delta: f64,
    /// Recovery rate (1/day).
    pub epsilon: f64,
    /// Death rate of infectives (1/day).
    pub alpha1: f64,
    /// Death rate of quarantined (1/day).
    pub alpha2: f64,
    /// Shedding rate (cell/ml/day/person).
    pub eta: f64,
    /// Bacteria death rate (1/day).
    pub d: f64,
    /// Uptake rate of bacteria by susceptibles (cell/ml/day/person).
    pub rho: f64,
    /// Weight of the control in the cost.
    pub c: f64,
    /// Upper bound of the control.
    pub u_max: f64,
}

impl ParamValues {
    /// Outflow rate of the infective class, `delta + alpha1 + mu`.
    pub fn a1(&self) -> f64 {
        self.delta + self.alpha1 + self.mu
    }

    /// Outflow rate of the quarantined class, `epsilon + alpha2 + mu`.
    pub fn a2(&self) -> f64 {
        self.epsilon + self.alpha2 + self.mu
    }

    /// Outflow rate of the recovered class, `omega + mu`.
    pub fn a3(&self) -> f64 {
        self.omega + self.mu
    }

    fn check(&self) -> Result<(), ModelError> {
        let rates = [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("beta", self.beta),
            ("kappa", self.kappa),
            ("omega", self.omega),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("eta", self.eta),
            ("d", self.d),
            ("rho", self.rho),
            ("c", self.c),
            ("u_max", self.u_max),
        ];
        for (name, value) in rates {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    rule: "finite and >= 0",
                });
            }
        }
        for (name, value) in [("kappa", self.kappa), ("d", self.d), ("mu", self.mu)] {
            if value <= 0.0 {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    rule: "> 0",
                });
            }
        }
        if self.u_max > 1.0 {
            return Err(ModelError::InvalidParameter {
                name: "u_max",
                value: self.u_max,
                rule: "<= 1",
            });
        }
        Ok(())
    }
}

/// Validated model parameters.
///
/// Field access goes through `Deref` to [`ParamValues`], so a record cannot be
/// mutated once built. Use [`ModelParams::modify`] to derive a variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ModelParams(ParamValues);

impl ModelParams {
    pub fn new(values: ParamValues) -> Result<Self, ModelError> {
        values.check()?;
        Ok(Self(values))
    }

    /// Copy the values, apply `edit`, and validate the result.
    pub fn modify(&self, edit: impl FnOnce(&mut ParamValues)) -> Result<Self, ModelError> {
        let mut values = self.0;
        edit(&mut values);
        Self::new(values)
    }

    pub fn values(&self) -> &ParamValues {
        &self.0
    }
}

impl Deref for ModelParams {
    type Target = ParamValues;

    fn deref(&self) -> &ParamValues {
        &self.0
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = ParamValues::deserialize(deserializer)?;
        ModelParams::new(values).map_err(serde::de::Error::custom)
    }
}

/// The five compartments at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemState {
    pub s: f64,
    pub i: f64,
    pub q: f64,
    pub r: f64,
    pub b: f64,
}

impl SystemState {
    pub const NAMES: [&'static str; DIM] = ["S", "I", "Q", "R", "B"];

    pub fn new(s: f64, i: f64, q: f64, r: f64, b: f64) -> Self {
        Self { s, i, q, r, b }
    }

    pub fn to_array(self) -> Vector5 {
        [self.s, self.i, self.q, self.r, self.b]
    }

    pub fn from_array(x: Vector5) -> Self {
        Self::new(x[0], x[1], x[2], x[3], x[4])
    }

    /// Total living humans `S + I + Q + R`.
    pub fn humans(&self) -> f64 {
        self.s + self.i + self.q + self.r
    }

    /// Checks that every component is finite and non-negative.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in Self::NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidState { name, value });
            }
        }
        Ok(())
    }
}

impl From<Vector5> for SystemState {
    fn from(x: Vector5) -> Self {
        Self::from_array(x)
    }
}

/// Upper bounds of the positively invariant region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    /// Bound on `S + I + Q + R`, `Lambda / mu`.
    pub human_cap: f64,
    /// Bound on `B`, `Lambda * eta / (mu * d)`.
    pub bacteria_cap: f64,
}

pub fn feasible_region(p: &ModelParams) -> FeasibleRegion {
    FeasibleRegion {
        human_cap: p.lambda / p.mu,
        bacteria_cap: p.lambda * p.eta / (p.mu * p.d),
    }
}

/// Saturating factor `B / (kappa + B)`.
#[inline]
pub(crate) fn saturation(p: &ParamValues, b: f64) -> f64 {
    b / (p.kappa + b)
}

/// Force-of-infection flux `beta * B * S / (kappa + B)` before control.
#[inline]
pub fn infection_flux(x: &SystemState, p: &ParamValues) -> f64 {
    p.beta * x.s * saturation(p, x.b)
}

/// Bacteria removed by susceptible uptake, `rho * B * S / (kappa + B)`.
#[inline]
pub fn uptake_term(x: &SystemState, p: &ParamValues) -> f64 {
    p.rho * x.s * saturation(p, x.b)
}

/// Vector field with the control already validated.
#[inline]
pub(crate) fn rhs(x: &SystemState, u: f64, p: &ParamValues) -> Vector5 {
    let new_infections = infection_flux(x, p) * (1.0 - u);
    [
        p.lambda - new_infections + p.omega * x.r - p.mu * x.s,
        new_infections - p.a1() * x.i,
        p.delta * x.i - p.a2() * x.q,
        p.epsilon * x.q - p.a3() * x.r,
        p.eta * x.i - p.d * x.b - uptake_term(x, p),
    ]
}

/// Uncontrolled SIQRB dynamics.
pub fn uncontrolled_rhs(x: &SystemState, p: &ModelParams) -> Vector5 {
    rhs(x, 0.0, p)
}

/// Dynamics with a fraction `u` of susceptibles protected from infection.
pub fn controlled_rhs(x: &SystemState, u: f64, p: &ModelParams) -> Result<Vector5, ModelError> {
    check_control(u, p)?;
    Ok(rhs(x, u, p))
}

pub(crate) fn check_control(u: f64, p: &ParamValues) -> Result<(), ModelError> {
    if !(0.0..=p.u_max).contains(&u) {
        return Err(ModelError::ControlOutOfRange { u, u_max: p.u_max });
    }
    Ok(())
}

/// Running cost: new infections plus weighted control effort.
pub fn cost_integrand(x: &SystemState, u: f64, p: &ModelParams) -> f64 {
    running_cost(x, u, p)
}

#[inline]
pub(crate) fn running_cost(x: &SystemState, u: f64, p: &ParamValues) -> f64 {
    infection_flux(x, p) * (1.0 - u) + p.c * u
}
