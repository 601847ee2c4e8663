//! Reproduction number, equilibria, local stability and the transcritical
//! bifurcation at `R0 = 1`.

use nalgebra::Matrix5;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::eigen::{eigenvalues, EigenError};
use crate::model::{saturation, ModelParams, ParamValues, SystemState};

/// Eigenvalues within `STABILITY_BAND * ||J||` of the imaginary axis are
/// treated as zero.
pub const STABILITY_BAND: f64 = 1e-12;

/// `beta * Lambda * eta / ((delta + alpha1 + mu) * (mu * kappa * d + rho * Lambda))`.
pub fn basic_reproduction_number(p: &ModelParams) -> f64 {
    r0_of(p)
}

fn r0_of(p: &ParamValues) -> f64 {
    p.beta * p.lambda * p.eta / (p.a1() * (p.mu * p.kappa * p.d + p.rho * p.lambda))
}

pub fn disease_free_equilibrium(p: &ModelParams) -> SystemState {
    SystemState::new(p.lambda / p.mu, 0.0, 0.0, 0.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositeRates {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Force of infection at the endemic state, `beta B* / (kappa + B*)`.
    pub lambda_star: f64,
    /// `a1 a2 a3 (lambda* + mu) - delta epsilon omega lambda*`.
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Infeasibility {
    #[error("R0 = {r0} does not exceed 1")]
    SubThreshold { r0: f64 },
    #[error("beta * eta = {beta_eta} does not exceed rho * a1 = {rho_a1}")]
    UptakeDominates { beta_eta: f64, rho_a1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndemicEquilibrium {
    pub state: SystemState,
    pub composite: CompositeRates,
}

/// Closed-form endemic equilibrium.
///
/// The force of infection `lambda*` comes from its closed form; `B*` is then
/// recovered by inverting `lambda* = beta B / (kappa + B)`.
pub fn endemic_equilibrium(p: &ModelParams) -> Result<EndemicEquilibrium, Infeasibility> {
    let r0 = r0_of(p);
    if !(r0 > 1.0) {
        return Err(Infeasibility::SubThreshold { r0 });
    }
    let (a1, a2, a3) = (p.a1(), p.a2(), p.a3());
    let beta_eta = p.beta * p.eta;
    let rho_a1 = p.rho * a1;
    if !(beta_eta > rho_a1) {
        return Err(Infeasibility::UptakeDominates { beta_eta, rho_a1 });
    }
    let dew = p.delta * p.epsilon * p.omega;
    let lambda_star =
        p.beta * (r0 - 1.0) * a1 * a2 * a3 * (p.rho * p.lambda + p.mu * p.kappa * p.d)
            / (p.lambda * (beta_eta - rho_a1) * a2 * a3
                + p.kappa * p.beta * p.d * (a1 * a2 * a3 - dew));
    let d = a1 * a2 * a3 * (lambda_star + p.mu) - dew * lambda_star;
    let composite = CompositeRates {
        a1,
        a2,
        a3,
        lambda_star,
        d,
    };
    let state = SystemState::new(
        p.lambda * a1 * a2 * a3 / d,
        p.lambda * a2 * a3 * lambda_star / d,
        p.lambda * p.delta * a3 * lambda_star / d,
        p.lambda * p.delta * p.epsilon * lambda_star / d,
        p.kappa * lambda_star / (p.beta - lambda_star),
    );
    Ok(EndemicEquilibrium { state, composite })
}

/// `B*` from the bacteria balance, `(beta eta - rho a1) Lambda a2 a3 lambda* / (beta D d)`.
pub fn endemic_bacteria_from_balance(p: &ModelParams, rates: &CompositeRates) -> f64 {
    (p.beta * p.eta - p.rho * rates.a1) * p.lambda * rates.a2 * rates.a3 * rates.lambda_star
        / (p.beta * rates.d * p.d)
}

/// Analytic Jacobian of the uncontrolled vector field.
pub fn jacobian(x: &SystemState, p: &ModelParams) -> Matrix5<f64> {
    let g = saturation(p, x.b);
    // d/dB of S B / (kappa + B)
    let dg = x.s * p.kappa / ((p.kappa + x.b) * (p.kappa + x.b));
    Matrix5::new(
        -p.beta * g - p.mu,
        0.0,
        0.0,
        p.omega,
        -p.beta * dg,
        p.beta * g,
        -p.a1(),
        0.0,
        0.0,
        p.beta * dg,
        0.0,
        p.delta,
        -p.a2(),
        0.0,
        0.0,
        0.0,
        0.0,
        p.epsilon,
        -p.a3(),
        0.0,
        -p.rho * g,
        p.eta,
        0.0,
        0.0,
        -p.d - p.rho * dg,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    /// Leading eigenvalue numerically on the imaginary axis.
    Marginal,
}

pub fn stability_of(values: &[Complex64], matrix_norm: f64) -> Stability {
    let band = STABILITY_BAND * matrix_norm;
    let lead = values
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if lead < -band {
        Stability::Stable
    } else if lead > band {
        Stability::Unstable
    } else {
        Stability::Marginal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub r0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub dfe: SystemState,
    pub dfe_eigenvalues: Vec<Complex64>,
    pub dfe_stability: Stability,
    pub dfe_stable: bool,
    /// Whether the DFE verdict agrees with the `R0 < 1` threshold.
    pub threshold_consistent: bool,
    pub ee_feasible: bool,
    pub ee_infeasibility: Option<Infeasibility>,
    pub ee: Option<SystemState>,
    pub composite: Option<CompositeRates>,
    pub ee_eigenvalues: Option<Vec<Complex64>>,
    pub ee_stability: Option<Stability>,
    pub ee_stable: Option<bool>,
}

pub fn classify_stability(p: &ModelParams) -> Result<EquilibriumReport, EigenError> {
    let r0 = basic_reproduction_number(p);
    let dfe = disease_free_equilibrium(p);
    let j0 = jacobian(&dfe, p);
    let dfe_eigenvalues = eigenvalues(&j0)?;
    let dfe_stability = stability_of(&dfe_eigenvalues, j0.norm());
    let threshold_consistent = match dfe_stability {
        Stability::Stable => r0 < 1.0,
        Stability::Unstable => r0 > 1.0,
        Stability::Marginal => (r0 - 1.0).abs() < 1e-6,
    };

    let endemic = endemic_equilibrium(p);
    let (ee, composite, ee_eigenvalues, ee_stability) = match &endemic {
        Ok(e) => {
            let j = jacobian(&e.state, p);
            let values = eigenvalues(&j)?;
            let stability = stability_of(&values, j.norm());
            (
                Some(e.state),
                Some(e.composite),
                Some(values),
                Some(stability),
            )
        }
        Err(_) => (None, None, None, None),
    };

    Ok(EquilibriumReport {
        r0,
        a1: p.a1(),
        a2: p.a2(),
        a3: p.a3(),
        dfe,
        dfe_eigenvalues,
        dfe_stability,
        dfe_stable: dfe_stability == Stability::Stable,
        threshold_consistent,
        ee_feasible: endemic.is_ok(),
        ee_infeasibility: endemic.err(),
        ee,
        composite,
        ee_eigenvalues,
        ee_stable: ee_stability.map(|s| s == Stability::Stable),
        ee_stability,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum BifurcationError {
    #[error("critical ingestion rate undefined: Lambda * eta = 0")]
    NoShedding,
    #[error("beta* eta = {beta_star_eta} does not exceed rho a1 = {rho_a1}")]
    UptakeDominates { beta_star_eta: f64, rho_a1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationReport {
    /// Ingestion rate at which `R0 = 1`.
    pub beta_star: f64,
    pub a_coeff: f64,
    pub b_coeff: f64,
    /// `a < 0` and `b > 0`: the endemic branch leaving `R0 = 1` is stable.
    pub forward: bool,
}

/// Critical ingestion rate and center-manifold coefficients `a`, `b` of the
/// transcritical bifurcation. The current `beta` of `p` is ignored.
pub fn bifurcation_coefficients(p: &ModelParams) -> Result<BifurcationReport, BifurcationError> {
    if !(p.lambda * p.eta > 0.0) {
        return Err(BifurcationError::NoShedding);
    }
    let (a1, a2, a3) = (p.a1(), p.a2(), p.a3());
    let uptake = p.rho * p.lambda + p.mu * p.kappa * p.d;
    let beta_star = a1 * uptake / (p.lambda * p.eta);
    let beta_star_eta = beta_star * p.eta;
    let rho_a1 = p.rho * a1;
    if !(beta_star_eta > rho_a1) {
        return Err(BifurcationError::UptakeDominates {
            beta_star_eta,
            rho_a1,
        });
    }
    let b_coeff = p.lambda * p.eta / uptake;
    let a_coeff = 2.0 * p.mu * (beta_star_eta - rho_a1) / uptake
        * ((p.delta * p.epsilon * p.omega - a1 * a2 * a3) / (a2 * a3 * p.mu) - b_coeff);
    Ok(BifurcationReport {
        beta_star,
        a_coeff,
        b_coeff,
        forward: a_coeff < 0.0 && b_coeff > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uncontrolled_rhs;
    use crate::scenario::ScenarioConfig;

    fn yemen() -> ModelParams {
        ScenarioConfig::yemen().params().unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn r0_reference_value() {
        let p = yemen();
        assert!(rel(basic_reproduction_number(&p), 3.830175) < 1e-5);
        let zero = p.modify(|v| v.beta = 0.0).unwrap();
        assert_eq!(basic_reproduction_number(&zero), 0.0);
        let twice = p.modify(|v| v.beta *= 2.0).unwrap();
        assert!(
            rel(
                basic_reproduction_number(&twice),
                2.0 * basic_reproduction_number(&p)
            ) < 1e-15
        );
    }

    #[test]
    fn dfe_values() {
        let p = yemen();
        let dfe = disease_free_equilibrium(&p);
        assert!(rel(dfe.s, 28.4 * 28_250_420.0 / 365_000.0 / 1.6e-5) < 1e-14);
        let slower = disease_free_equilibrium(&p.modify(|v| v.mu *= 2.0).unwrap());
        assert!(rel(slower.s, dfe.s / 2.0) < 1e-15);
    }

    #[test]
    fn endemic_reference_values() {
        let p = yemen();
        let ee = endemic_equilibrium(&p).unwrap();
        let expect = [2.900036e7, 1.039755e5, 5.978021e5, 1.075290e8, 2.788426e6];
        for (got, want) in ee.state.to_array().iter().zip(expect) {
            assert!(rel(*got, want) < 1e-4, "{got} vs {want}");
        }
        let f = uncontrolled_rhs(&ee.state, &p);
        for (fi, xi) in f.iter().zip(ee.state.to_array()) {
            assert!(fi.abs() < 1e-6 * xi, "{fi} at scale {xi}");
        }
    }

    #[test]
    fn bacteria_two_routes_agree() {
        let p = yemen();
        let ee = endemic_equilibrium(&p).unwrap();
        let balance = endemic_bacteria_from_balance(&p, &ee.composite);
        assert!(rel(ee.state.b, balance) < 1e-10);
        assert!(ee.composite.d > 0.0);
    }

    #[test]
    fn endemic_infeasible_below_threshold() {
        let p = yemen().modify(|v| v.beta *= 0.1).unwrap();
        assert!(matches!(
            endemic_equilibrium(&p),
            Err(Infeasibility::SubThreshold { .. })
        ));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = yemen();
        let x = ScenarioConfig::yemen().initial();
        let j = jacobian(&x, &p);
        let scale = [x.s, 1e3, 1e3, 1e3, x.b];
        for col in 0..5 {
            let h = 1e-4 * scale[col];
            let mut plus = x.to_array();
            let mut minus = x.to_array();
            plus[col] += h;
            minus[col] -= h;
            let fp = uncontrolled_rhs(&plus.into(), &p);
            let fm = uncontrolled_rhs(&minus.into(), &p);
            for row in 0..5 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                let exact = j[(row, col)];
                assert!(
                    (fd - exact).abs() <= 1e-6 * exact.abs().max(1e-12),
                    "({row},{col}) fd {fd} exact {exact}"
                );
            }
        }
    }

    #[test]
    fn quarantine_column_structure() {
        let p = yemen();
        let j = jacobian(&ScenarioConfig::yemen().initial(), &p);
        let col: Vec<f64> = j.column(2).iter().copied().collect();
        assert_eq!(col, vec![0.0, 0.0, -p.a2(), p.epsilon, 0.0]);
    }

    #[test]
    fn critical_jacobian_matches_closed_form() {
        let p = yemen();
        let bif = bifurcation_coefficients(&p).unwrap();
        let pc = p.modify(|v| v.beta = bif.beta_star).unwrap();
        let j = jacobian(&disease_free_equilibrium(&pc), &pc);
        let uptake = p.rho * p.lambda + p.mu * p.kappa * p.d;
        let entry = p.a1() * uptake / (p.eta * p.mu * p.kappa);
        assert!(rel(j[(1, 4)], entry) < 1e-12);
        assert!(rel(j[(0, 4)], -entry) < 1e-12);
        assert!(rel(j[(4, 4)], -uptake / (p.mu * p.kappa)) < 1e-12);

        let mut expect = vec![
            0.0,
            -p.mu,
            -p.a3(),
            -p.a2(),
            -p.a1() - uptake / (p.mu * p.kappa),
        ];
        expect.sort_by(|a, b| b.total_cmp(a));
        let got = eigenvalues(&j).unwrap();
        let norm = j.norm();
        for (z, e) in got.iter().zip(&expect) {
            assert!(z.im.abs() < 1e-9 * norm);
            let tol = if *e == 0.0 {
                1e-12 * norm
            } else {
                1e-6 * e.abs()
            };
            assert!((z.re - e).abs() <= tol, "{z} vs {e}");
        }
    }

    #[test]
    fn yemen_classification() {
        let report = classify_stability(&yemen()).unwrap();
        assert!(!report.dfe_stable);
        assert_eq!(report.dfe_stability, Stability::Unstable);
        assert_eq!(report.ee_stable, Some(true));
        assert!(report.threshold_consistent);
        assert!(report.ee_eigenvalues.unwrap().iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn sub_threshold_classification() {
        let p = yemen().modify(|v| v.beta *= 0.1).unwrap();
        let report = classify_stability(&p).unwrap();
        // R0 is linear in beta
        assert!(rel(report.r0, 0.3830175) < 1e-5);
        assert!(report.dfe_stable);
        assert!(report.ee.is_none() && !report.ee_feasible);
        assert!(report.threshold_consistent);
    }

    #[test]
    fn threshold_is_marginal() {
        let p = yemen();
        let bif = bifurcation_coefficients(&p).unwrap();
        let pc = p.modify(|v| v.beta = bif.beta_star).unwrap();
        let report = classify_stability(&pc).unwrap();
        assert_eq!(report.dfe_stability, Stability::Marginal);
        assert!(!report.dfe_stable);
        assert!(report.threshold_consistent);
    }

    #[test]
    fn bifurcation_signs_and_threshold() {
        let p = yemen();
        let bif = bifurcation_coefficients(&p).unwrap();
        let pc = p.modify(|v| v.beta = bif.beta_star).unwrap();
        assert!(rel(basic_reproduction_number(&pc), 1.0) < 1e-10);
        assert!(bif.a_coeff < 0.0);
        let uptake = p.rho * p.lambda + p.mu * p.kappa * p.d;
        assert!(rel(bif.b_coeff, p.lambda * p.eta / uptake) < 1e-15);
        assert!(bif.b_coeff > 0.0 && bif.forward);
    }

    #[test]
    fn bifurcation_needs_shedding() {
        let p = yemen().modify(|v| v.eta = 0.0).unwrap();
        assert_eq!(
            bifurcation_coefficients(&p),
            Err(BifurcationError::NoShedding)
        );
    }
}
