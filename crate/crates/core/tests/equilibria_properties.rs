use nalgebra::{Matrix5, Vector5};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use siqrb_core::eigen::eigenvalues;
use siqrb_core::equilibria::{
    basic_reproduction_number, bifurcation_coefficients, classify_stability,
    disease_free_equilibrium, endemic_equilibrium, jacobian,
};
use siqrb_core::model::{infection_flux, uncontrolled_rhs, ModelParams, SystemState};

mod common;
use common::{random_params, random_state, rel};

/// Magnitude of the largest term in each component of the vector field.
fn term_scale(x: &SystemState, p: &ModelParams) -> [f64; 5] {
    let inf = infection_flux(x, p);
    let uptake = p.rho * x.s * x.b / (p.kappa + x.b);
    [
        p.lambda.max(inf).max(p.omega * x.r).max(p.mu * x.s),
        inf.max(p.a1() * x.i),
        (p.delta * x.i).max(p.a2() * x.q),
        (p.epsilon * x.q).max(p.a3() * x.r),
        (p.eta * x.i).max(p.d * x.b).max(uptake),
    ]
}

#[test]
fn endemic_state_is_a_rest_point_and_dfe_verdict_tracks_r0() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut endemic, mut subcritical) = (0, 0);
    for _ in 0..1000 {
        let p = random_params(&mut rng, 3.0, 20.0);
        let r0 = basic_reproduction_number(&p);
        let feasible = r0 > 1.0 && p.beta * p.eta > p.rho * p.a1();
        match endemic_equilibrium(&p) {
            Ok(ee) => {
                assert!(feasible);
                endemic += 1;
                let f = uncontrolled_rhs(&ee.state, &p);
                let scale = term_scale(&ee.state, &p);
                for k in 0..5 {
                    assert!(
                        f[k].abs() < 1e-6 * scale[k],
                        "component {k}: {} vs {}",
                        f[k],
                        scale[k]
                    );
                }
            }
            Err(_) => assert!(!feasible),
        }
        if (r0 - 1.0).abs() > 1e-3 {
            let report = classify_stability(&p).unwrap();
            assert_eq!(report.dfe_stable, r0 < 1.0, "R0 = {r0}");
            subcritical += usize::from(r0 < 1.0);
        }
    }
    assert!(
        endemic > 100 && subcritical > 100,
        "{endemic} endemic, {subcritical} subcritical"
    );
}

#[test]
fn a1a2a3_exceeds_delta_epsilon_omega() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let p = random_params(&mut rng, 10.0, 10.0);
        assert!(p.a1() * p.a2() * p.a3() - p.delta * p.epsilon * p.omega > 0.0);
    }
}

/// Five-point central differences. The field is linear in `S, I, Q, R`, so
/// their steps only need to beat roundoff; along `B` the step follows the
/// saturation scale `kappa + B`.
fn fd_jacobian(x: &SystemState, p: &ModelParams) -> Matrix5<f64> {
    let base = x.to_array();
    let mut m = Matrix5::zeros();
    for j in 0..5 {
        let h = if j == 4 {
            1e-3 * (p.kappa + base[4])
        } else {
            1e-3 * (base[j].abs() + 1.0)
        };
        let eval = |offset: f64| {
            let mut y = base;
            y[j] += offset;
            uncontrolled_rhs(&SystemState::from_array(y), p)
        };
        let (f2, f1, b1, b2) = (eval(2.0 * h), eval(h), eval(-h), eval(-2.0 * h));
        for i in 0..5 {
            m[(i, j)] = (-f2[i] + 8.0 * f1[i] - 8.0 * b1[i] + b2[i]) / (12.0 * h);
        }
    }
    m
}

#[test]
fn analytic_and_fd_jacobian_share_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let p = random_params(&mut rng, 3.0, 3.0);
        let x = random_state(&mut rng, &p);
        let exact = eigenvalues(&jacobian(&x, &p)).unwrap();
        let approx = eigenvalues(&fd_jacobian(&x, &p)).unwrap();
        for z in &exact {
            let nearest = approx
                .iter()
                .map(|w| (w - z).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= 1e-4 * z.norm(), "{z} vs {approx:?}");
        }
    }
}

#[test]
fn r0_is_one_at_critical_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let p = random_params(&mut rng, 3.0, 3.0);
        let beta_star = bifurcation_coefficients(&p).unwrap().beta_star;
        let at = p.modify(|v| v.beta = beta_star).unwrap();
        assert!(rel(basic_reproduction_number(&at), 1.0) < 1e-12);
    }
}

/// `sum_kij v_k w_i w_j d2f_k/dx_i dx_j` at the DFE with `beta = beta*`, with
/// the null vectors taken from an SVD of the Jacobian and the Hessian from
/// central differences of the Jacobian.
fn center_manifold_a(p: &ModelParams) -> f64 {
    let dfe = disease_free_equilibrium(p);
    let jac = jacobian(&dfe, p);
    let svd = jac.svd(true, true);
    let k = svd.singular_values.imin();
    let w: Vector5<f64> = svd.v_t.unwrap().row(k).transpose();
    let v: Vector5<f64> = svd.u.unwrap().column(k).into_owned();
    assert!(svd.singular_values[k] < 1e-12 * jac.norm());
    let (w, v) = (w / w[1], v / v[1]);

    let base = dfe.to_array();
    let steps = [1e-4 * base[0], 1.0, 1.0, 1.0, 1e-4 * p.kappa];
    let mut sum = 0.0;
    for j in 0..5 {
        let mut up = base;
        let mut dn = base;
        up[j] += steps[j];
        dn[j] -= steps[j];
        let d = (jacobian(&SystemState::from_array(up), p)
            - jacobian(&SystemState::from_array(dn), p))
            / (2.0 * steps[j]);
        sum += w[j] * (v.transpose() * d * w)[0];
    }
    sum
}

#[test]
fn bifurcation_a_matches_center_manifold_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut draws: Vec<ModelParams> = vec![common::yemen().0];
    draws.extend((0..50).map(|_| random_params(&mut rng, 3.0, 1.0)));
    for p in draws {
        let report = bifurcation_coefficients(&p).unwrap();
        let at = p.modify(|v| v.beta = report.beta_star).unwrap();
        let oracle = center_manifold_a(&at);
        assert!(
            rel(report.a_coeff, oracle) < 1e-6,
            "{} vs {oracle}",
            report.a_coeff
        );
        assert!(report.b_coeff > 0.0);
    }
}

#[test]
fn dfe_eigenvalues_match_diagonal_blocks() {
    let (p, _) = common::yemen();
    let report = classify_stability(&p).unwrap();
    let expected = [-p.mu, -p.a2(), -p.a3()];
    for e in expected {
        assert!(report
            .dfe_eigenvalues
            .iter()
            .any(|z: &Complex64| (z.re - e).abs() < 1e-9 * e.abs() && z.im == 0.0));
    }
}
