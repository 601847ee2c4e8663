//! SIQRB cholera transmission model with bacteria uptake by susceptibles.
//!
//! - [`model`]: parameters, state, vector fields and running cost
//! - [`equilibria`]: `R0`, disease-free and endemic equilibria, local
//!   stability, transcritical bifurcation coefficients
//! - [`integrate`]: fixed-step RK4 and invariant-region checks
//! - [`optctl`]: Pontryagin conditions and the forward-backward sweep for
//!   chlorine-tablet distribution
//! - [`calibrate`]: weekly case series and least-squares fit of `beta`
//! - [`scenario`]: JSON scenario configs and the Yemen reference scenario

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod eigen;
pub mod equilibria;
pub mod integrate;
pub mod model;
pub mod optctl;
pub mod scenario;

pub use model::{ModelParams, ParamValues, SystemState};
pub use scenario::ScenarioConfig;
