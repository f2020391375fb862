//! `mixclass selftest`: fast end-to-end property checks of the numerical
//! stack plus the runner's determinism contract. Prints one line per
//! property; any failure is collected and reported together.

use mixclass::{
    compute_observables, gh127, solve_erm, solve_erm_warm, solve_fixed_point, solve_lda,
    solve_least_squares, trapezoid_expect, Dataset, LossSpec, MixtureModel, NoiseLaw,
};
use nalgebra::DVector;

use crate::config::Experiment;
use crate::figures::isotropic_square_error;
use crate::runner::run_experiment;

struct Report {
    failures: Vec<String>,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            println!("selftest: {name:<42} ok  ({detail})");
        } else {
            println!("selftest: {name:<42} FAIL ({detail})");
            self.failures.push(format!("{name}: {detail}"));
        }
    }
}

fn isotropic(p: usize, mu_norm2: f64, scale: f64) -> MixtureModel {
    let mu = DVector::from_element(p, (mu_norm2 / p as f64).sqrt());
    MixtureModel::isotropic(mu, scale).expect("valid model")
}

/// Runs every property; returns the list of failures (empty on success).
pub fn run() -> Result<(), Vec<String>> {
    let mut report = Report {
        failures: Vec::new(),
    };

    prox_round_trip(&mut report);
    stationarity_and_duals(&mut report);
    lda_least_squares_alignment(&mut report);
    fixed_point_scalar_inequalities(&mut report);
    quadrature_against_trapezoid(&mut report);
    leave_one_out_identity(&mut report);
    runner_determinism(&mut report);

    if report.failures.is_empty() {
        println!("selftest: all properties hold");
        Ok(())
    } else {
        Err(report.failures)
    }
}

/// `g + kappa l'(g) = t` to 1e-10 relative, across losses, curvatures, and a
/// wide argument range.
fn prox_round_trip(report: &mut Report) {
    let mut worst = 0.0f64;
    for loss in LossSpec::ALL {
        for kappa in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let mut t = -30.0;
            while t <= 30.0 {
                let g = loss.prox(kappa, t).expect("prox in range");
                let residual = (g + kappa * loss.deriv1(g) - t).abs() / t.abs().max(1.0);
                worst = worst.max(residual);
                t += 0.37;
            }
        }
    }
    report.check(
        "prox round-trip",
        worst <= 1e-10,
        format!("worst residual {worst:.2e}"),
    );
}

/// Fitted gradients vanish to the solver's advertised tolerance; at lambda 0
/// the dual weights are orthogonal to every signed feature; and the dual
/// combination objective of any loss sits above the square-loss value.
fn stationarity_and_duals(report: &mut Report) {
    let model = isotropic(60, 0.36, 1.0);
    let data = model
        .sample_dataset(NoiseLaw::Gaussian, 600, 11)
        .expect("sampling");
    let grad_scale = data.weighted_mean().norm().max(1.0);

    let ridge = solve_erm(&data, LossSpec::Logistic, 0.3).expect("ridge fit");
    report.check(
        "stationarity residual",
        ridge.grad_residual <= 1e-9 * grad_scale,
        format!("|grad| {:.2e}", ridge.grad_residual),
    );

    let sol = solve_erm(&data, LossSpec::Logistic, 0.0).expect("unregularized fit");
    let obs = compute_observables(&data, &sol, LossSpec::Logistic).expect("observables");
    let signed = DVector::from_fn(data.n(), |i, _| data.labels[i] * obs.c[i]);
    let balance = (&data.features * signed).norm() / data.n() as f64;
    report.check(
        "dual weights balance the features at lambda 0",
        balance <= 1e-9 * grad_scale,
        format!("|X_y c|/n = {balance:.2e}"),
    );

    let ls = solve_erm(&data, LossSpec::Square, 0.0).expect("square fit");
    let ls_obs = compute_observables(&data, &ls, LossSpec::Square).expect("observables");
    let objective = |c: &DVector<f64>| c.norm() / c.sum();
    let (logistic_obj, square_obj) = (objective(&obs.c), objective(&ls_obs.c));
    report.check(
        "square loss minimizes the dual objective",
        logistic_obj >= square_obj - 1e-12,
        format!("{logistic_obj:.6} >= {square_obj:.6}"),
    );
}

/// The ridge least-squares fit and the regularized within-class-scatter
/// direction are the same ray (rank-one update of the Gram matrix).
fn lda_least_squares_alignment(report: &mut Report) {
    let model = isotropic(60, 0.36, 1.0);
    let data = model
        .sample_dataset(NoiseLaw::Gaussian, 240, 12)
        .expect("sampling");
    let ls = solve_least_squares(&data, 0.5).expect("least squares");
    let lda = solve_lda(&data, 0.5).expect("lda");
    let misalignment = 1.0 - ls.beta.dot(&lda.beta) / (ls.beta.norm() * lda.beta.norm());
    report.check(
        "least squares aligns with the scatter direction",
        misalignment.abs() <= 1e-8,
        format!("1 - cos = {misalignment:.2e}"),
    );
}

/// Scalar constraints every fixed point must satisfy.
fn fixed_point_scalar_inequalities(report: &mut Report) {
    let model = isotropic(100, 1.0, 1.0);
    let (p, n) = (100.0f64, 500usize);
    let state = solve_fixed_point(&model, LossSpec::Logistic, 0.5, n).expect("fixed point");
    let ratio = n as f64 / p;
    let bound =
        (ratio * state.gamma * state.gamma - state.eta * state.eta) / (state.sigma * state.sigma);
    report.check(
        "theta^2 bounded by the dual second moment",
        state.theta * state.theta <= bound + 1e-12,
        format!("{:.6} <= {bound:.6}", state.theta * state.theta),
    );
    report.check(
        "gamma/eta at least sqrt(p/n)",
        state.gamma / state.eta >= (1.0 / ratio).sqrt() * (1.0 - 1e-12),
        format!(
            "{:.6} vs {:.6}",
            state.gamma / state.eta,
            (1.0 / ratio).sqrt()
        ),
    );

    let square = solve_fixed_point(&model, LossSpec::Square, 0.3, n).expect("square fixed point");
    let gap = (square.theta - 1.0 / (1.0 + square.kappa)).abs();
    report.check(
        "square-loss theta equals 1/(1+kappa)",
        gap <= 1e-8,
        format!("gap {gap:.2e}"),
    );

    let unregularized =
        solve_fixed_point(&model, LossSpec::Square, 0.0, n).expect("unregularized square");
    let closed = isotropic_square_error(1.0, 100, n);
    let closed_gap = (unregularized.predicted_error() - closed).abs();
    report.check(
        "unregularized square error matches closed form",
        closed_gap <= 1e-9,
        format!("gap {closed_gap:.2e}"),
    );
}

/// The 127-node Gauss-Hermite rule agrees with a brute-force trapezoid on
/// the nonsmooth-free integrands it is used for.
fn quadrature_against_trapezoid(report: &mut Report) {
    let (m, sigma, kappa) = (1.3, 2.1, 0.8);
    let loss = LossSpec::Logistic;
    let gh = gh127().expect(m, sigma, |r| loss.h_map(kappa, r).expect("h map"));
    let tz = trapezoid_expect(m, sigma, 12.0, 40_000, |r| {
        loss.h_map(kappa, r).expect("h map")
    });
    report.check(
        "quadrature matches trapezoid",
        (gh - tz).abs() <= 1e-8,
        format!("difference {:.2e}", (gh - tz).abs()),
    );
}

/// Refitting without one sample moves that sample's margin to the de-fitted
/// value r_i, within the usual 1/sqrt(p) scale.
fn leave_one_out_identity(report: &mut Report) {
    let p = 100;
    let model = isotropic(p, 1.0, 1.0);
    let data = model
        .sample_dataset(NoiseLaw::Gaussian, 400, 13)
        .expect("sampling");
    let loss = LossSpec::Logistic;
    let sol = solve_erm(&data, loss, 0.5).expect("full fit");
    let obs = compute_observables(&data, &sol, loss).expect("observables");

    let mut deviations: Vec<f64> = (0..12)
        .map(|k| {
            let i = k * 33;
            let reduced = Dataset {
                features: data.features.clone().remove_column(i),
                labels: data.labels.clone().remove_row(i),
            };
            let refit = solve_erm_warm(&reduced, loss, 0.5, &sol.beta).expect("refit");
            let margin = data.labels[i] * data.features.column(i).dot(&refit.beta);
            (margin - obs.r[i]).abs()
        })
        .collect();
    deviations.sort_by(f64::total_cmp);
    let median = deviations[deviations.len() / 2];
    let tolerance = 5.0 / (p as f64).sqrt();
    report.check(
        "leave-one-out identity",
        median <= tolerance,
        format!("median deviation {median:.3} <= {tolerance:.3}"),
    );
}

/// Byte-identical CSV on repeated runs, and identical rows whether trials
/// run serially or on the worker pool.
fn runner_determinism(report: &mut Report) {
    let dir = std::env::temp_dir().join(format!("mixclass-selftest-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let text = format!(
        "[model]\np = 24\nmu = \"ones\"\nmu_norm2 = 1.0\ncov = \"identity\"\n\
         [data]\nnoise = \"gaussian\"\nn = [96]\n\
         [fit]\nlosses = [\"logistic\", \"square\"]\nlambda = [0.2, 2.0]\n\
         [run]\nreplications = 4\nbase_seed = 97\n\
         [output]\ncsv = '{}'\n",
        dir.join("selftest.csv").display()
    );
    let exp = Experiment::from_toml(&text, &dir).expect("selftest config");

    run_experiment(&exp, false).expect("parallel run");
    let first = std::fs::read(&exp.csv_path).expect("csv");
    run_experiment(&exp, false).expect("parallel rerun");
    let second = std::fs::read(&exp.csv_path).expect("csv");
    report.check(
        "repeated runs are byte-identical",
        first == second,
        format!("{} bytes", first.len()),
    );

    let parallel_rows = rows_of(&first);
    run_experiment(&exp, true).expect("serial run");
    let serial = std::fs::read(&exp.csv_path).expect("csv");
    let serial_rows = rows_of(&serial);
    let mut sorted_parallel = parallel_rows.clone();
    sorted_parallel.sort();
    let mut sorted_serial = serial_rows.clone();
    sorted_serial.sort();
    report.check(
        "parallel and serial trials agree",
        sorted_parallel == sorted_serial && parallel_rows == serial_rows,
        format!("{} rows", serial_rows.len()),
    );
    let _ = std::fs::remove_dir_all(&dir);
}

fn rows_of(bytes: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(bytes)
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}
