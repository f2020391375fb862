//! Cross-module checks: plug-in estimates against the deterministic theory,
//! and the leave-one-out identity against actual refits.

use mixclass::{
    compute_observables, solve_erm, solve_erm_warm, solve_fixed_point, stochastic_error_prediction,
    LossSpec, MixtureModel, NoiseLaw,
};
use nalgebra::DVector;

fn isotropic(p: usize, m1: f64) -> MixtureModel {
    let mu = DVector::from_element(p, (m1 / p as f64).sqrt());
    MixtureModel::isotropic(mu, 1.0).unwrap()
}

/// Dropping sample i and refitting should land near r_i = margin_i - kappa c_i:
/// the score vector prices each sample's influence on its own margin.
#[test]
fn leave_one_out_identity() {
    let p = 150;
    let n = 600;
    let model = isotropic(p, 2.0);
    let data = model.sample_dataset(NoiseLaw::Gaussian, n, 42).unwrap();
    let full = solve_erm(&data, LossSpec::Logistic, 1.0).unwrap();
    let obs = compute_observables(&data, &full, LossSpec::Logistic).unwrap();

    let mut deviations = Vec::new();
    for k in 0..20 {
        let i = k * (n / 20);
        let reduced = mixclass::Dataset {
            features: data.features.clone().remove_column(i),
            labels: data.labels.clone().remove_row(i),
        };
        let refit = solve_erm_warm(&reduced, LossSpec::Logistic, 1.0, &full.beta).unwrap();
        let loo_margin = data.labels[i] * data.features.column(i).dot(&refit.beta);
        deviations.push((loo_margin - obs.r[i]).abs());
    }
    deviations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = deviations[deviations.len() / 2];
    let limit = 5.0 / (p as f64).sqrt();
    assert!(median <= limit, "median deviation {median} > {limit}");
}

/// One large draw: every plug-in scalar sits within 5% of its fixed-point value.
#[test]
fn plugin_estimates_track_theory() {
    let p = 300;
    let n = 2700;
    let model = isotropic(p, 2.0);
    let theory = solve_fixed_point(&model, LossSpec::Logistic, 0.25, n).unwrap();
    let data = model.sample_dataset(NoiseLaw::Gaussian, n, 7).unwrap();
    let sol = solve_erm(&data, LossSpec::Logistic, 0.25).unwrap();
    let obs = compute_observables(&data, &sol, LossSpec::Logistic).unwrap();
    for (name, estimate, exact) in [
        ("theta", obs.theta_hat, theory.theta),
        ("eta", obs.eta_hat, theory.eta),
        ("gamma", obs.gamma_hat, theory.gamma),
        ("kappa", obs.kappa_hat, theory.kappa),
    ] {
        let rel = (estimate - exact).abs() / exact;
        assert!(rel <= 0.05, "{name}: {estimate} vs {exact} (rel {rel:.4})");
    }
}

/// Single-draw stochastic prediction lands on the curve value at lambda=1.
#[test]
fn stochastic_prediction_matches_curve_point() {
    let model = isotropic(300, 2.0);
    let data = model.sample_dataset(NoiseLaw::Gaussian, 900, 11).unwrap();
    let sol = solve_erm(&data, LossSpec::Logistic, 1.0).unwrap();
    let obs = compute_observables(&data, &sol, LossSpec::Logistic).unwrap();
    let prediction = stochastic_error_prediction(&obs, &model, 1.0).unwrap();
    assert!(
        (prediction - 0.0963).abs() <= 0.003,
        "prediction {prediction}"
    );
}

/// Averaged stochastic predictions for the unregularized square loss at
/// n = 900 sit near the reference value 0.1467.
#[test]
fn stochastic_prediction_square_average() {
    let model = isotropic(300, 2.0);
    let mut sum = 0.0;
    let trials = 20;
    for seed in 0..trials {
        let data = model
            .sample_dataset(NoiseLaw::Gaussian, 900, 1000 + seed)
            .unwrap();
        let sol = solve_erm(&data, LossSpec::Square, 0.0).unwrap();
        let obs = compute_observables(&data, &sol, LossSpec::Square).unwrap();
        sum += stochastic_error_prediction(&obs, &model, 0.0).unwrap();
    }
    let mean = sum / trials as f64;
    assert!((mean - 0.1467).abs() <= 0.008, "mean prediction {mean}");
}
