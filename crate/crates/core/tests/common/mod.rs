#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use siqrb_core::model::{ModelParams, SystemState};
use siqrb_core::ScenarioConfig;

pub fn yemen() -> (ModelParams, SystemState) {
    let cfg = ScenarioConfig::yemen();
    (cfg.params().unwrap(), cfg.initial())
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn log_uniform(rng: &mut ChaCha8Rng, center: f64, factor: f64) -> f64 {
    center * factor.powf(rng.gen_range(-1.0..=1.0))
}

/// Every positive rate scaled log-uniformly within `factor` of the reference
/// value; `beta` gets its own spread so draws land on both sides of `R0 = 1`.
pub fn random_params(rng: &mut ChaCha8Rng, factor: f64, beta_factor: f64) -> ModelParams {
    let (p, _) = yemen();
    let mut draw = |v: f64| log_uniform(rng, v, factor);
    let mut v = *p.values();
    v.lambda = draw(v.lambda);
    v.mu = draw(v.mu);
    v.kappa = draw(v.kappa);
    v.omega = draw(v.omega);
    v.delta = draw(v.delta);
    v.epsilon = draw(v.epsilon);
    v.alpha1 = draw(v.alpha1);
    v.alpha2 = draw(v.alpha2);
    v.eta = draw(v.eta);
    v.d = draw(v.d);
    v.rho = draw(v.rho);
    v.beta = log_uniform(rng, v.beta, beta_factor);
    ModelParams::new(v).unwrap()
}

/// A state with humans and bacteria inside the invariant region of `p`.
pub fn random_state(rng: &mut ChaCha8Rng, p: &ModelParams) -> SystemState {
    let region = siqrb_core::model::feasible_region(p);
    let mut w: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
    let total = rng.gen_range(0.0..1.0) * region.human_cap / w.iter().sum::<f64>();
    w.iter_mut().for_each(|x| *x *= total);
    let b = rng.gen_range(0.0..1.0) * region.bacteria_cap;
    SystemState::new(w[0], w[1], w[2], w[3], b)
}
