//! Built-in experiment presets (`fig1` .. `fig7`).
//!
//! Every preset has a fixed default replication count and base seed, so two
//! invocations with the same arguments emit identical files; `--reps` and
//! `--seed` override them. Outputs are CSV (authoritative) plus an SVG view.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mixclass::{
    compute_observables, optimal_combination, predicted_combination_error, q_function, solve_erm,
    solve_fixed_point, LossSpec, MixtureModel, NoiseLaw, TheoryState,
};
use nalgebra::DVector;
use thiserror::Error;

use crate::config::Experiment;
use crate::plot::{histogram, Plot};
use crate::runner::{self, run_experiment};

pub const FIGURE_IDS: [&str; 7] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

#[derive(Debug, Error)]
pub enum FigureError {
    #[error(transparent)]
    Run(#[from] runner::RunError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Numeric {
        context: &'static str,
        message: String,
    },
}

fn numeric(context: &'static str, err: impl std::fmt::Display) -> FigureError {
    FigureError::Numeric {
        context,
        message: err.to_string(),
    }
}

/// Renders one preset into `out_dir`, returning the files it wrote.
pub fn reproduce_figure(
    id: &str,
    out_dir: &Path,
    reps: Option<usize>,
    seed: Option<u64>,
) -> Result<Vec<PathBuf>, FigureError> {
    std::fs::create_dir_all(out_dir).map_err(|source| FigureError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    match id {
        "fig1" => fig1(out_dir, reps.unwrap_or(25), seed.unwrap_or(101)),
        "fig2" => fig2(out_dir, reps.unwrap_or(25), seed.unwrap_or(202)),
        "fig3" => fig3(out_dir, reps.unwrap_or(1), seed.unwrap_or(303)),
        "fig4" => coordinate_means_figure(
            "fig4",
            Preset4or5::RankOne,
            out_dir,
            reps.unwrap_or(500),
            seed.unwrap_or(404),
        ),
        "fig5" => coordinate_means_figure(
            "fig5",
            Preset4or5::Isotropic,
            out_dir,
            reps.unwrap_or(500),
            seed.unwrap_or(505),
        ),
        "fig6" => fig6(out_dir, reps.unwrap_or(10), seed.unwrap_or(606)),
        "fig7" => fig7(out_dir, reps.unwrap_or(300), seed.unwrap_or(707)),
        _ => unreachable!("figure ids validated by the caller"),
    }
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf, FigureError> {
    std::fs::write(&path, text).map_err(|source| FigureError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Experiment presets driven through the ordinary config + runner path.
fn preset_experiment(
    out_csv: &Path,
    out_svg: &Path,
    model_lines: &str,
    noise: &str,
    losses: &str,
    lambdas: &str,
    ns: &str,
    reps: usize,
    seed: u64,
) -> Experiment {
    let text = format!(
        "[model]\n{model_lines}\n\
         [data]\nnoise = \"{noise}\"\nn = {ns}\n\
         [fit]\nlosses = {losses}\nlambda = {lambdas}\n\
         [run]\nreplications = {reps}\nbase_seed = {seed}\n\
         [output]\ncsv = '{}'\nplot = '{}'\n",
        out_csv.display(),
        out_svg.display()
    );
    Experiment::from_toml(&text, Path::new(".")).expect("preset configs are valid")
}

/// Rank-one-perturbed covariance, block mean: an error curve over the
/// regularization grid (logistic) and over the sample count (square, lambda
/// 0).
fn fig1(out: &Path, reps: usize, seed: u64) -> Result<Vec<PathBuf>, FigureError> {
    let model = "p = 300\nmu = \"block:1,2\"\nmu_norm2 = 5.0\ncov = \"rank1:1,6\"";
    let over_lambda = preset_experiment(
        &out.join("fig1_lambda.csv"),
        &out.join("fig1_lambda.svg"),
        model,
        "gaussian",
        "[\"logistic\"]",
        "[0.0156, 0.0625, 0.25, 1.0, 4.0, 16.0, 64.0, 256.0, 1024.0]",
        "[900]",
        reps,
        seed,
    );
    run_experiment(&over_lambda, false)?;
    let over_n = preset_experiment(
        &out.join("fig1_n.csv"),
        &out.join("fig1_n.svg"),
        model,
        "gaussian",
        "[\"square\"]",
        "[0.0]",
        "[900, 1200, 1500, 1800, 2100]",
        reps,
        seed + 10_000,
    );
    run_experiment(&over_n, false)?;
    Ok(vec![
        out.join("fig1_lambda.csv"),
        out.join("fig1_lambda.svg"),
        out.join("fig1_n.csv"),
        out.join("fig1_n.svg"),
    ])
}

/// Isotropic benchmark: logistic error over the regularization grid and
/// unregularized square-loss error over the sample count.
fn fig2(out: &Path, reps: usize, seed: u64) -> Result<Vec<PathBuf>, FigureError> {
    let model = "p = 300\nmu = \"ones\"\nmu_norm2 = 2.0\ncov = \"identity\"";
    let over_lambda = preset_experiment(
        &out.join("fig2_lambda.csv"),
        &out.join("fig2_lambda.svg"),
        model,
        "gaussian",
        "[\"logistic\"]",
        "[0.0156, 0.0625, 0.25, 1.0, 4.0, 16.0, 64.0, 256.0, 1024.0]",
        "[900]",
        reps,
        seed,
    );
    run_experiment(&over_lambda, false)?;
    let over_n = preset_experiment(
        &out.join("fig2_n.csv"),
        &out.join("fig2_n.svg"),
        model,
        "gaussian",
        "[\"square\"]",
        "[0.0]",
        "[900, 1200, 1500, 1800, 2100, 2400, 2700, 3000]",
        reps,
        seed + 10_000,
    );
    run_experiment(&over_n, false)?;
    Ok(vec![
        out.join("fig2_lambda.csv"),
        out.join("fig2_lambda.svg"),
        out.join("fig2_n.csv"),
        out.join("fig2_n.svg"),
    ])
}

fn histogram_csv(edges: &[f64], densities: &[f64]) -> String {
    let mut text = String::from("bin_lo,bin_hi,density\n");
    for (k, &d) in densities.iter().enumerate() {
        let _ = writeln!(text, "{},{},{}", edges[k], edges[k + 1], d);
    }
    text
}

fn curve_csv(header: &str, points: &[(f64, f64)]) -> String {
    let mut text = format!("{header}\n");
    for &(x, y) in points {
        let _ = writeln!(text, "{x},{y}");
    }
    text
}

/// Margin-law check on one fitted classifier: histogram of the de-fitted
/// margins r_i against the predicted normal law, and histogram of the dual
/// weights c_i against the push-forward of that law through the residual map.
fn fig3(out: &Path, reps: usize, seed: u64) -> Result<Vec<PathBuf>, FigureError> {
    let p = 256;
    let n = 6 * p;
    let loss = LossSpec::Logistic;
    let mut mu = DVector::zeros(p);
    mu[0] = 1.0;
    let model = MixtureModel::isotropic(mu, 2.0).map_err(|e| numeric("fig3 model", e))?;
    let theory = solve_fixed_point(&model, loss, 0.0, n).map_err(|e| numeric("fig3 theory", e))?;

    let mut margins = Vec::with_capacity(n * reps);
    let mut duals = Vec::with_capacity(n * reps);
    for trial in 0..reps {
        let data = model
            .sample_dataset(NoiseLaw::Gaussian, n, seed + trial as u64)
            .map_err(|e| numeric("fig3 sample", e))?;
        let sol = solve_erm(&data, loss, 0.0).map_err(|e| numeric("fig3 fit", e))?;
        let obs =
            compute_observables(&data, &sol, loss).map_err(|e| numeric("fig3 observables", e))?;
        margins.extend(obs.r.iter().copied());
        duals.extend(obs.c.iter().copied());
    }

    let bins = 40;
    let (r_edges, r_density) = histogram(&margins, bins);
    let (c_edges, c_density) = histogram(&duals, bins);

    // Predicted margin law N(m, sigma^2) on a fine grid.
    let (m, sigma) = (theory.m, theory.sigma);
    let normal = |r: f64| {
        let u = (r - m) / sigma;
        (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let grid: Vec<f64> = (0..=400)
        .map(|k| m - 5.0 * sigma + 10.0 * sigma * k as f64 / 400.0)
        .collect();
    let r_curve: Vec<(f64, f64)> = grid.iter().map(|&r| (r, normal(r))).collect();

    // Push-forward of the margin law through the residual map h: the dual
    // weight density at h(r) is phi(r)/|h'(r)|, traced along the r grid.
    let kappa = theory.kappa;
    let h = |r: f64| loss.h_map(kappa, r).expect("h map on interior points");
    let step = sigma * 1e-4;
    let mut c_curve: Vec<(f64, f64)> = grid
        .iter()
        .map(|&r| {
            let slope = (h(r + step) - h(r - step)) / (2.0 * step);
            (h(r), normal(r) / slope.abs().max(1e-300))
        })
        .collect();
    c_curve.sort_by(|a, b| a.0.total_cmp(&b.0));

    let files = vec![
        write_text(
            out.join("fig3_margin_hist.csv"),
            &histogram_csv(&r_edges, &r_density),
        )?,
        write_text(
            out.join("fig3_margin_density.csv"),
            &curve_csv("r,density", &r_curve),
        )?,
        write_text(
            out.join("fig3_dual_hist.csv"),
            &histogram_csv(&c_edges, &c_density),
        )?,
        write_text(
            out.join("fig3_dual_density.csv"),
            &curve_csv("c,density", &c_curve),
        )?,
    ];

    let margins_plot = Plot::new("de-fitted margins", "r", "density")
        .bars(r_edges, r_density)
        .line("predicted law", r_curve);
    let duals_plot = Plot::new("dual weights", "c", "density")
        .bars(c_edges, c_density)
        .line("predicted law", c_curve);
    let mut out_files = files;
    let margins_svg = out.join("fig3_margins.svg");
    margins_plot
        .write(&margins_svg)
        .map_err(|source| FigureError::Io {
            path: margins_svg.clone(),
            source,
        })?;
    out_files.push(margins_svg);
    let duals_svg = out.join("fig3_duals.svg");
    duals_plot
        .write(&duals_svg)
        .map_err(|source| FigureError::Io {
            path: duals_svg.clone(),
            source,
        })?;
    out_files.push(duals_svg);
    Ok(out_files)
}

enum Preset4or5 {
    /// p=60, C = 3I + (6/p) v v^T, mu = sqrt(2/p) * [1...1, 2...2].
    RankOne,
    /// p=60, C = 2I, mu = sqrt(2/p) * ones.
    Isotropic,
}

impl Preset4or5 {
    fn model(&self) -> MixtureModel {
        match self {
            Preset4or5::RankOne => {
                preset_model("p = 60\nmu = \"block:1,2\"\nmu_norm2 = 5.0\ncov = \"rank1:3,6\"")
            }
            Preset4or5::Isotropic => {
                let mu = DVector::from_element(60, (2.0 / 60.0f64).sqrt());
                MixtureModel::isotropic(mu, 2.0).expect("valid preset")
            }
        }
    }
}

fn preset_model(model_lines: &str) -> MixtureModel {
    let text = format!(
        "[model]\n{model_lines}\n\
         [data]\nnoise = \"gaussian\"\nn = [60]\n\
         [fit]\nlosses = [\"logistic\"]\nlambda = [0.0]\n\
         [run]\nreplications = 1\nbase_seed = 0\n\
         [output]\ncsv = 'unused.csv'\n"
    );
    Experiment::from_toml(&text, Path::new("."))
        .expect("preset configs are valid")
        .model
}

/// Coordinate-wise mean of the fitted classifier against its deterministic
/// limit `eta (lambda I + theta C)^{-1} mu`, at lambda 0 and 1.
fn coordinate_means_figure(
    name: &str,
    preset: Preset4or5,
    out: &Path,
    reps: usize,
    seed: u64,
) -> Result<Vec<PathBuf>, FigureError> {
    let model = preset.model();
    let p = model.p();
    let n = 420;
    let loss = LossSpec::Logistic;

    let mut csv = String::from("coordinate,lambda,beta_mean,beta_theory\n");
    let mut plot = Plot::new("coordinate means", "coordinate", "value");
    for &lambda in &[0.0, 1.0] {
        let theory =
            solve_fixed_point(&model, loss, lambda, n).map_err(|e| numeric("theory", e))?;
        let limit = deterministic_coordinates(&model, &theory, lambda);

        let mut mean = DVector::zeros(p);
        for trial in 0..reps {
            // Offset per-lambda so the two sweeps use disjoint datasets.
            let trial_seed = seed + trial as u64 + if lambda == 0.0 { 0 } else { 500_000 };
            let data = model
                .sample_dataset(NoiseLaw::Gaussian, n, trial_seed)
                .map_err(|e| numeric("sample", e))?;
            let sol = solve_erm(&data, loss, lambda).map_err(|e| numeric("fit", e))?;
            mean += sol.beta;
        }
        mean /= reps as f64;

        for j in 0..p {
            let _ = writeln!(csv, "{},{},{},{}", j + 1, lambda, mean[j], limit[j]);
        }
        let label = format!("lambda={lambda}");
        plot = plot
            .scatter(
                &format!("mean, {label}"),
                (0..p).map(|j| ((j + 1) as f64, mean[j])).collect(),
            )
            .line(
                &format!("limit, {label}"),
                (0..p).map(|j| ((j + 1) as f64, limit[j])).collect(),
            );
    }

    let csv_path = write_text(out.join(format!("{name}.csv")), &csv)?;
    let svg_path = out.join(format!("{name}.svg"));
    plot.write(&svg_path).map_err(|source| FigureError::Io {
        path: svg_path.clone(),
        source,
    })?;
    Ok(vec![csv_path, svg_path])
}

/// `eta (lambda I + theta C)^{-1} mu` in the original coordinates.
fn deterministic_coordinates(
    model: &MixtureModel,
    theory: &TheoryState,
    lambda: f64,
) -> DVector<f64> {
    let w = model.mu_in_eigenbasis();
    let d = model.cov_eigvals();
    let scaled = DVector::from_fn(model.p(), |j, _| {
        theory.eta * w[j] / (lambda + theory.theta * d[j])
    });
    model.cov_eigvecs() * scaled
}

/// Two-loss mixing sweep: prediction for the combination `rho` parts first
/// loss, `1 - rho` parts second, averaged over replications, with the
/// single-loss limits and the closed-form optimal mix marked.
fn fig6(out: &Path, reps: usize, seed: u64) -> Result<Vec<PathBuf>, FigureError> {
    let p = 256;
    let n = 10 * p;
    let losses = [LossSpec::Exponential, LossSpec::Logistic];
    let mut mu = DVector::zeros(p);
    mu[0] = 1.0;
    let model = MixtureModel::isotropic(mu, 2.0).map_err(|e| numeric("fig6 model", e))?;

    let singles: Vec<TheoryState> = losses
        .iter()
        .map(|&loss| solve_fixed_point(&model, loss, 0.0, n))
        .collect::<Result<_, _>>()
        .map_err(|e| numeric("fig6 theory", e))?;

    let rho_grid: Vec<f64> = (0..=160).map(|k| -4.0 + 0.05 * k as f64).collect();
    let mut curve_sum = vec![0.0f64; rho_grid.len()];
    let mut optimal_sum = (0.0f64, 0.0f64);
    for trial in 0..reps {
        let data = model
            .sample_dataset(NoiseLaw::Gaussian, n, seed + trial as u64)
            .map_err(|e| numeric("fig6 sample", e))?;
        let sols: Vec<_> = losses
            .iter()
            .map(|&loss| solve_erm(&data, loss, 0.0))
            .collect::<Result<_, _>>()
            .map_err(|e| numeric("fig6 fit", e))?;
        let obs: Vec<_> = losses
            .iter()
            .zip(&sols)
            .map(|(&loss, sol)| compute_observables(&data, sol, loss))
            .collect::<Result<_, _>>()
            .map_err(|e| numeric("fig6 observables", e))?;

        for (k, &rho) in rho_grid.iter().enumerate() {
            // Normalized mixing ratio rho: weight u_i on the dual vector c_i
            // chosen so eta_1 u_1 = rho, eta_2 u_2 = 1 - rho (tau = 1).
            let weights = [
                obs[0].theta_hat * rho / obs[0].eta_hat,
                obs[1].theta_hat * (1.0 - rho) / obs[1].eta_hat,
            ];
            let err = predicted_combination_error(&obs, &weights, &model, 0.0)
                .map_err(|e| numeric("fig6 sweep", e))?;
            curve_sum[k] += err;
        }

        let best =
            optimal_combination(&obs, &sols, &model).map_err(|e| numeric("fig6 optimum", e))?;
        let mix: Vec<f64> = (0..2)
            .map(|i| obs[i].eta_hat * best.weights[i] / obs[i].theta_hat)
            .collect();
        optimal_sum.0 += mix[0] / (mix[0] + mix[1]);
        optimal_sum.1 += best.predicted_error;
    }
    let curve: Vec<(f64, f64)> = rho_grid
        .iter()
        .zip(&curve_sum)
        .map(|(&rho, &sum)| (rho, sum / reps as f64))
        .collect();
    let optimum = (optimal_sum.0 / reps as f64, optimal_sum.1 / reps as f64);

    let mut csv = format!(
        "rho,err_combined,err_{}_theory,err_{}_theory\n",
        losses[0].name(),
        losses[1].name()
    );
    for &(rho, err) in &curve {
        let _ = writeln!(
            csv,
            "{rho},{err},{},{}",
            singles[0].predicted_error(),
            singles[1].predicted_error()
        );
    }
    let _ = writeln!(csv, "# optimal_rho={} optimal_err={}", optimum.0, optimum.1);
    let csv_path = write_text(out.join("fig6.csv"), &csv)?;

    let span = [rho_grid[0], *rho_grid.last().expect("nonempty grid")];
    let plot = Plot::new("two-loss mixing sweep", "rho", "predicted error")
        .line("combined", curve)
        .line(
            &format!("{} alone", losses[0].name()),
            span.iter()
                .map(|&x| (x, singles[0].predicted_error()))
                .collect(),
        )
        .line(
            &format!("{} alone", losses[1].name()),
            span.iter()
                .map(|&x| (x, singles[1].predicted_error()))
                .collect(),
        )
        .scatter("optimal mix", vec![optimum]);
    let svg_path = out.join("fig6.svg");
    plot.write(&svg_path).map_err(|source| FigureError::Io {
        path: svg_path.clone(),
        source,
    })?;
    Ok(vec![csv_path, svg_path])
}

/// Combination of logistic and square-root classifiers against each alone and
/// against the square-loss limit, across sample sizes.
fn fig7(out: &Path, reps: usize, seed: u64) -> Result<Vec<PathBuf>, FigureError> {
    let p = 250;
    let pair = [LossSpec::Logistic, LossSpec::SquareRoot];
    let mut mu = DVector::zeros(p);
    mu[0] = 0.6;
    let model = MixtureModel::isotropic(mu, 1.0).map_err(|e| numeric("fig7 model", e))?;

    let mut csv = String::from(
        "n,err_logistic_theory,err_square_root_theory,err_square_theory,\
         err_combined_pred,err_combined_emp\n",
    );
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 5];
    for (block, &n) in [7 * p, 8 * p].iter().enumerate() {
        let theories: Vec<f64> = pair
            .iter()
            .chain([LossSpec::Square].iter())
            .map(|&loss| solve_fixed_point(&model, loss, 0.0, n).map(|t| t.predicted_error()))
            .collect::<Result<_, _>>()
            .map_err(|e| numeric("fig7 theory", e))?;

        let mut pred_sum = 0.0;
        let mut emp_sum = 0.0;
        for trial in 0..reps {
            let trial_seed = seed + (block * reps + trial) as u64;
            let data = model
                .sample_dataset(NoiseLaw::Gaussian, n, trial_seed)
                .map_err(|e| numeric("fig7 sample", e))?;
            let sols: Vec<_> = pair
                .iter()
                .map(|&loss| solve_erm(&data, loss, 0.0))
                .collect::<Result<_, _>>()
                .map_err(|e| numeric("fig7 fit", e))?;
            let obs: Vec<_> = pair
                .iter()
                .zip(&sols)
                .map(|(&loss, sol)| compute_observables(&data, sol, loss))
                .collect::<Result<_, _>>()
                .map_err(|e| numeric("fig7 observables", e))?;
            let combo =
                optimal_combination(&obs, &sols, &model).map_err(|e| numeric("fig7 optimum", e))?;
            pred_sum += combo.predicted_error;
            emp_sum += model
                .classification_error(&combo.combined_beta)
                .map_err(|e| numeric("fig7 error", e))?;
        }
        let pred = pred_sum / reps as f64;
        let emp = emp_sum / reps as f64;
        let _ = writeln!(
            csv,
            "{n},{},{},{},{pred},{emp}",
            theories[0], theories[1], theories[2]
        );
        let x = n as f64 / p as f64;
        for (idx, value) in theories.iter().copied().chain([pred, emp]).enumerate() {
            series[idx].push((x, value));
        }
    }
    let csv_path = write_text(out.join("fig7.csv"), &csv)?;

    let labels = [
        "logistic theory",
        "square_root theory",
        "square theory",
        "combined prediction",
        "combined empirical",
    ];
    let mut plot = Plot::new("combination against singles", "n/p", "error");
    for (label, points) in labels.iter().zip(series) {
        plot = plot.line(label, points);
    }
    let svg_path = out.join("fig7.svg");
    plot.write(&svg_path).map_err(|source| FigureError::Io {
        path: svg_path.clone(),
        source,
    })?;
    Ok(vec![csv_path, svg_path])
}

/// Closed-form unregularized square-loss error on isotropic models, used by
/// the self test as an independent cross-check of `fig2`'s right panel.
pub fn isotropic_square_error(mu_norm2: f64, p: usize, n: usize) -> f64 {
    let delta = p as f64 / n as f64;
    q_function((mu_norm2 * mu_norm2 * (1.0 - delta) / (mu_norm2 + delta)).sqrt())
}
