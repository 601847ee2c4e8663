use proptest::prelude::*;
use siqrb_core::calibrate::{
    fit_beta, load_series, sample_model_series, sse, write_series, EpidemicSeries, FitOptions,
    Observation, YEMEN_WEEKLY_CSV,
};
use siqrb_core::integrate::TimeGrid;

mod common;

fn weekly_times() -> Vec<f64> {
    (0..=50).map(|w| 7.0 * w as f64).collect()
}

fn round_trip(beta: f64) -> f64 {
    let (p, x0) = common::yemen();
    let truth = p.modify(|v| v.beta = beta).unwrap();
    let series = sample_model_series(&truth, x0, &weekly_times(), 100.0, "synthetic").unwrap();
    fit_beta(&series, &p, x0, &FitOptions::default())
        .unwrap()
        .beta_hat
}

#[test]
fn synthetic_series_recovers_generator() {
    for beta in [0.01891, 0.012, 0.03] {
        let hat = round_trip(beta);
        assert!((hat - beta).abs() < 1e-4, "{beta}: {hat}");
    }
}

#[test]
fn zero_series_drives_beta_to_lower_bound() {
    let (p, x0) = common::yemen();
    let obs = weekly_times()
        .into_iter()
        .map(|t| Observation { t, cases: 0.0 })
        .collect();
    let series = EpidemicSeries::new("zeros", obs).unwrap();
    let opts = FitOptions::default();
    let fit = fit_beta(&series, &p, x0, &opts).unwrap();
    assert!(fit.beta_hat - opts.beta_lo < 1e-6, "{}", fit.beta_hat);
}

#[test]
fn yemen_fit_beats_every_grid_point() {
    let (p, x0) = common::yemen();
    let series = load_series(YEMEN_WEEKLY_CSV.as_bytes()).unwrap();
    let opts = FitOptions::default();
    let fit = fit_beta(&series, &p, x0, &opts).unwrap();
    assert!(common::rel(fit.beta_hat, 0.01891) < 0.1, "{}", fit.beta_hat);
    assert!(fit.beta_hat >= opts.beta_lo && fit.beta_hat <= opts.beta_hi);

    let grid = TimeGrid::with_density(0.0, 350.0, opts.grid_density).unwrap();
    let step = (opts.beta_hi - opts.beta_lo) / (opts.n_grid - 1) as f64;
    for k in 0..opts.n_grid {
        let beta = opts.beta_lo + k as f64 * step;
        let candidate = p.modify(|v| v.beta = beta).unwrap();
        assert!(fit.sse <= sse(&series, &candidate, x0, &grid).unwrap());
    }
}

fn series_strategy() -> impl Strategy<Value = EpidemicSeries> {
    let label = prop_oneof![
        Just(String::new()),
        "[A-Za-z0-9][A-Za-z0-9 ,()._-]{0,30}[A-Za-z0-9]"
    ];
    let rows = prop::collection::vec((1e-6..50.0f64, 0.0..1e7f64), 1..60);
    (label, rows).prop_map(|(label, rows)| {
        let mut t = 0.0;
        let obs = rows
            .into_iter()
            .map(|(dt, cases)| {
                t += dt;
                Observation { t, cases }
            })
            .collect();
        EpidemicSeries::new(label, obs).unwrap()
    })
}

proptest! {
    #[test]
    fn write_then_load_is_identity(series in series_strategy()) {
        let mut buf = Vec::new();
        write_series(&series, &mut buf).unwrap();
        prop_assert_eq!(load_series(buf.as_slice()).unwrap(), series);
    }
}
