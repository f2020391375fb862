//! Acceptance suite: nine numbered criteria covering the deterministic
//! predictions, the stochastic (plug-in) predictions, the distributional
//! claims, the loss-optimality theorems, combination bounds, universality,
//! and the CLI property suite. One PASS/FAIL line per criterion; the
//! process exits nonzero if any criterion fails.
//!
//! Monte Carlo criteria use fixed seeds, so every run is reproducible.

use std::fmt::Write as _;
use std::process::Command;
use std::time::Instant;

use mixclass::{
    bias_fixed_lower_bound, compute_observables, optimal_combination, solve_erm, solve_fixed_point,
    solve_least_squares, stochastic_error_prediction, LossSpec, MixtureModel, NoiseLaw,
    SolverError,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let criteria: [(&str, fn() -> Result<String, String>); 9] = [
        ("deterministic error curve, logistic ridge", criterion_1),
        ("stochastic prediction, unregularized square", criterion_2),
        ("rank-one-bump covariance targets", criterion_3),
        ("margin and dual-weight laws", criterion_4),
        ("square-loss optimality without ridge", criterion_5),
        ("square-loss optimality across ridge grid", criterion_6),
        (
            "two-loss combination against the single-loss floor",
            criterion_7,
        ),
        ("universality across noise laws", criterion_8),
        ("property suite via selftest", criterion_9),
    ];
    let mut failures = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                println!("criterion {} ({name}): PASS [{secs:.1}s] {detail}", idx + 1);
            }
            Err(detail) => {
                failures += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1}s] {detail}", idx + 1);
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn dense_ones_model(p: usize, mu_norm2: f64) -> MixtureModel {
    let mu = DVector::from_element(p, (mu_norm2 / p as f64).sqrt());
    MixtureModel::isotropic(mu, 1.0).expect("valid isotropic model")
}

/// Deterministic fixed-point curve: p=300, n=900, dense mean with
/// |mu|^2 = 2, identity covariance, logistic ridge across four lambdas.
/// Each prediction must land within 0.003 of the reference curve in
/// under five seconds.
fn criterion_1() -> Result<String, String> {
    let model = dense_ones_model(300, 2.0);
    let targets = [
        (0.0156, 0.1225),
        (0.25, 0.1002),
        (4.0, 0.0953),
        (1024.0, 0.0952),
    ];
    let mut worst_dev = 0.0f64;
    let mut worst_secs = 0.0f64;
    for (lambda, target) in targets {
        let started = Instant::now();
        let state = solve_fixed_point(&model, LossSpec::Logistic, lambda, 900)
            .map_err(|e| format!("fixed point failed at lambda={lambda}: {e}"))?;
        let secs = started.elapsed().as_secs_f64();
        let dev = (state.predicted_error() - target).abs();
        worst_dev = worst_dev.max(dev);
        worst_secs = worst_secs.max(secs);
        if dev > 0.003 {
            return Err(format!(
                "lambda={lambda}: predicted {:.4} vs target {target} (|dev|={dev:.4} > 0.003)",
                state.predicted_error()
            ));
        }
        if secs >= 5.0 {
            return Err(format!("lambda={lambda}: {secs:.1}s >= 5s per point"));
        }
    }
    Ok(format!(
        "max|dev|={worst_dev:.4} (tol 0.003), max {worst_secs:.2}s/point"
    ))
}

/// Stochastic prediction: square loss at lambda=0, averaged over 100
/// one-shot plug-in predictions per sample size. Targets come from the
/// reference curve; tolerance 0.005; whole criterion under three minutes.
fn criterion_2() -> Result<String, String> {
    let started = Instant::now();
    let model = dense_ones_model(300, 2.0);
    let trials = 100;
    let mut detail = String::new();
    for (block, (n, target)) in [(900usize, 0.1467), (1800, 0.1082), (3000, 0.0948)]
        .into_iter()
        .enumerate()
    {
        let mut predictions = Vec::with_capacity(trials);
        for trial in 0..trials {
            let seed = 20_000 + (block * trials + trial) as u64;
            let data = model
                .sample_dataset(NoiseLaw::Gaussian, n, seed)
                .map_err(|e| format!("sampling failed at n={n}: {e}"))?;
            let sol = solve_least_squares(&data, 0.0)
                .map_err(|e| format!("least squares failed at n={n} seed={seed}: {e}"))?;
            let obs = compute_observables(&data, &sol, LossSpec::Square)
                .map_err(|e| format!("observables failed at n={n} seed={seed}: {e}"))?;
            let pred = stochastic_error_prediction(&obs, &model, 0.0)
                .map_err(|e| format!("prediction failed at n={n} seed={seed}: {e}"))?;
            predictions.push(pred);
        }
        let mean = predictions.iter().sum::<f64>() / predictions.len() as f64;
        let dev = (mean - target).abs();
        if dev > 0.005 {
            return Err(format!(
                "n={n}: mean prediction {mean:.4} vs target {target} (|dev|={dev:.4} > 0.005)"
            ));
        }
        let _ = write!(detail, "n={n}: {mean:.4} (tgt {target}) ");
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 180.0 {
        return Err(format!("{secs:.0}s >= 180s budget"));
    }
    Ok(detail.trim_end().to_string())
}

/// Covariance with a rank-one bump on half the coordinates. The source
/// plot's caption is ambiguous about a sqrt(2) factor; the reading checked
/// here treats C = I + (6/p) v v^T with v the indicator of the second
/// half, which reproduces the published coordinates. The alternative
/// symmetrized reading shifts predictions by about +0.02 and does not.
fn criterion_3() -> Result<String, String> {
    let p = 300;
    let s = (2.0 / p as f64).sqrt();
    let mu = DVector::from_fn(p, |j, _| if j < p / 2 { s } else { 2.0 * s });
    let cov = DMatrix::from_fn(p, p, |i, j| {
        let base = if i == j { 1.0 } else { 0.0 };
        let bump = if i >= p / 2 && j >= p / 2 {
            6.0 / p as f64
        } else {
            0.0
        };
        base + bump
    });
    let (model, _) = MixtureModel::from_covariance(mu, cov).map_err(|e| e.to_string())?;

    let logistic = solve_fixed_point(&model, LossSpec::Logistic, 0.25, 900)
        .map_err(|e| format!("logistic fixed point: {e}"))?
        .predicted_error();
    let square = solve_fixed_point(&model, LossSpec::Square, 0.0, 900)
        .map_err(|e| format!("square fixed point: {e}"))?
        .predicted_error();

    let dev_log = (logistic - 0.1019).abs();
    let dev_sq = (square - 0.1424).abs();
    if dev_log > 0.004 {
        return Err(format!(
            "logistic lambda=0.25: {logistic:.4} vs 0.1019 (|dev|={dev_log:.4} > 0.004)"
        ));
    }
    if dev_sq > 0.004 {
        return Err(format!(
            "square lambda=0 n=900: {square:.4} vs 0.1424 (|dev|={dev_sq:.4} > 0.004)"
        ));
    }
    Ok(format!(
        "logistic {logistic:.4} (tgt 0.1019), square {square:.4} (tgt 0.1424); \
         caveat: unsymmetrized rank-one reading of the ambiguous covariance"
    ))
}

/// Distributional check: at p=256, n=6p, logistic lambda=0, mu=e1, C=2I,
/// the de-fitted margins r_i follow N(m, sigma^2) and the dual weights
/// obey c_i = h(r_i). Moments are pooled over 24 trials (a single trial's
/// mean fluctuates ~11%); the dual-map check uses the theory kappa, since
/// with the per-trial kappa_hat it holds exactly by construction.
fn criterion_4() -> Result<String, String> {
    let started = Instant::now();
    let p = 256;
    let n = 6 * p;
    let mut mu = DVector::zeros(p);
    mu[0] = 1.0;
    let model = MixtureModel::isotropic(mu, 2.0).map_err(|e| e.to_string())?;
    let theory = solve_fixed_point(&model, LossSpec::Logistic, 0.0, n)
        .map_err(|e| format!("fixed point: {e}"))?;

    let mut pooled_r = Vec::new();
    let mut dual_devs = Vec::new();
    for trial in 0..24u64 {
        let data = model
            .sample_dataset(NoiseLaw::Gaussian, n, 40_000 + trial)
            .map_err(|e| e.to_string())?;
        let sol =
            solve_erm(&data, LossSpec::Logistic, 0.0).map_err(|e| format!("trial {trial}: {e}"))?;
        let obs = compute_observables(&data, &sol, LossSpec::Logistic)
            .map_err(|e| format!("trial {trial}: {e}"))?;
        for (&ri, &ci) in obs.r.iter().zip(obs.c.iter()) {
            let h = LossSpec::Logistic
                .h_map(theory.kappa, ri)
                .map_err(|e| e.to_string())?;
            dual_devs.push((ci - h).abs());
            pooled_r.push(ri);
        }
    }

    let count = pooled_r.len() as f64;
    let mean = pooled_r.iter().sum::<f64>() / count;
    let var = pooled_r
        .iter()
        .map(|r| (r - mean) * (r - mean))
        .sum::<f64>()
        / count;
    let mean_rel = (mean - theory.m).abs() / theory.m;
    let var_rel = (var - theory.sigma * theory.sigma).abs() / (theory.sigma * theory.sigma);
    dual_devs.sort_by(|a, b| a.total_cmp(b));
    let median_dev = dual_devs[dual_devs.len() / 2];
    let bound = 5.0 / (p as f64).sqrt();

    if mean_rel > 0.03 {
        return Err(format!(
            "mean(r)={mean:.4} vs m={:.4}: rel dev {mean_rel:.3} > 0.03",
            theory.m
        ));
    }
    if var_rel > 0.03 {
        return Err(format!(
            "var(r)={var:.4} vs sigma^2={:.4}: rel dev {var_rel:.3} > 0.03",
            theory.sigma * theory.sigma
        ));
    }
    if median_dev > bound {
        return Err(format!("median|c - h(r)|={median_dev:.4} > {bound:.4}"));
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("{secs:.0}s >= 60s budget"));
    }
    Ok(format!(
        "mean dev {:.1}%, var dev {:.1}%, median|c-h(r)|={median_dev:.4} (bound {bound:.4})",
        100.0 * mean_rel,
        100.0 * var_rel
    ))
}

/// The signal scale is kept moderate so the whitened signal-to-noise ratio
/// stays below the separability boundary at n/p >= 3: stronger signals push
/// the unregularized margin-loss fixed point out of existence even at those
/// aspect ratios, which is a different regime than the one probed here.
fn random_diagonal_model(seed: u64) -> MixtureModel {
    let p = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals_sqrt = DVector::from_fn(p, |_, _| rng.random_range(0.5..3.0f64).sqrt());
    let mut mu = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0f64));
    let norm2 = rng.random_range(0.5..0.9f64);
    mu *= (norm2 / mu.norm_squared()).sqrt();
    MixtureModel::new(mu, DMatrix::identity(p, p), vals_sqrt).expect("valid random model")
}

/// Unregularized optimality: at lambda=0 the square loss minimizes the
/// predicted error among losses whose solution exists. At n/p=1.5 the
/// margin losses sit in the separable phase (no solution), so the fixed
/// point must refuse; at n/p in {3, 8} it exists and the square loss wins
/// with margin >= -1e-6 on five random models. Confirmed empirically with
/// up to 200 paired trials on the first model at n/p=3, skipping the
/// occasional finite-size draw that comes out separable.
fn criterion_5() -> Result<String, String> {
    let models: Vec<MixtureModel> = (0..5).map(|k| random_diagonal_model(500 + k)).collect();
    let mut worst_margin = f64::INFINITY;
    for (k, model) in models.iter().enumerate() {
        for (ratio, n) in [(1.5, 150usize), (3.0, 300), (8.0, 800)] {
            let square = solve_fixed_point(model, LossSpec::Square, 0.0, n)
                .map_err(|e| format!("model {k} n/p={ratio}: square theory failed: {e}"))?
                .predicted_error();
            for loss in [LossSpec::Logistic, LossSpec::Exponential] {
                match solve_fixed_point(model, loss, 0.0, n) {
                    Ok(state) => {
                        if ratio < 2.0 {
                            return Err(format!(
                                "model {k} n/p={ratio}: {} fixed point converged in the \
                                 separable phase (theta={:.4})",
                                loss.name(),
                                state.theta
                            ));
                        }
                        let margin = state.predicted_error() - square;
                        worst_margin = worst_margin.min(margin);
                        if margin < -1e-6 {
                            return Err(format!(
                                "model {k} n/p={ratio}: {} beats square by {margin:.2e}",
                                loss.name()
                            ));
                        }
                    }
                    Err(err) => {
                        if ratio >= 2.0 {
                            return Err(format!(
                                "model {k} n/p={ratio}: {} theory failed: {err}",
                                loss.name()
                            ));
                        }
                    }
                }
            }
        }
    }

    // Empirical confirmation: paired trials share the dataset, so the
    // difference of errors is estimated without the trial-level noise.
    // A finite-size draw can be linearly separable even at n/p=3, and a
    // separable draw has no unregularized margin-loss minimizer, so the
    // comparison is conditioned on existence: such trials are skipped
    // (separability is a property of the data, so the skip keeps the two
    // margin losses paired), with a floor on how many trials must remain.
    let model = &models[0];
    let n = 300;
    let trials = 200;
    let mut skipped = 0usize;
    let mut diff_log = Vec::with_capacity(trials);
    let mut diff_exp = Vec::with_capacity(trials);
    'trial: for trial in 0..trials {
        let data = model
            .sample_dataset(NoiseLaw::Gaussian, n, 60_000 + trial as u64)
            .map_err(|e| e.to_string())?;
        let ls = solve_least_squares(&data, 0.0).map_err(|e| format!("trial {trial}: {e}"))?;
        let err_ls = model
            .classification_error(&ls.beta)
            .map_err(|e| e.to_string())?;
        let mut pair = [0.0f64; 2];
        for (slot, loss) in [LossSpec::Logistic, LossSpec::Exponential]
            .into_iter()
            .enumerate()
        {
            let sol = match solve_erm(&data, loss, 0.0) {
                Ok(sol) => sol,
                Err(SolverError::Separable { .. }) => {
                    skipped += 1;
                    continue 'trial;
                }
                Err(e) => return Err(format!("trial {trial} {}: {e}", loss.name())),
            };
            let err = model
                .classification_error(&sol.beta)
                .map_err(|e| e.to_string())?;
            pair[slot] = err - err_ls;
        }
        diff_log.push(pair[0]);
        diff_exp.push(pair[1]);
    }
    if diff_log.len() < 150 {
        return Err(format!(
            "only {} of {trials} trials were non-separable; the ensemble has \
             drifted too close to the separable phase",
            diff_log.len()
        ));
    }
    let mut detail =
        format!("worst theory margin {worst_margin:.2e}; {skipped} separable skips; empirical");
    for (name, diffs) in [("logistic", diff_log), ("exponential", diff_exp)] {
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var =
            diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (diffs.len() - 1) as f64;
        let se = (var / diffs.len() as f64).sqrt();
        if mean < -3.0 * se {
            return Err(format!(
                "empirical: {name} beats square by {mean:.5} ({:.1} standard errors)",
                mean / se
            ));
        }
        let _ = write!(detail, " {name}-square={mean:.4}+-{se:.4}");
    }
    Ok(detail)
}

/// The three anisotropic spectra used to stress the ridge sweep: mean
/// loaded on small eigendirections so the optimal ridge is interior.
fn anisotropic_models() -> Vec<(MixtureModel, usize)> {
    let mut out = Vec::new();
    {
        let p = 200;
        let d = DVector::from_fn(p, |j, _| 0.5 + 2.5 * j as f64 / (p - 1) as f64);
        let w2: Vec<f64> = d.iter().map(|&d| 1.0 / (d * d)).collect();
        let scale = 1.2 / w2.iter().sum::<f64>();
        let mu = DVector::from_iterator(p, w2.iter().map(|&w| (w * scale).sqrt()));
        let model = MixtureModel::new(mu, DMatrix::identity(p, p), d.map(f64::sqrt)).unwrap();
        out.push((model, 600));
    }
    {
        let p = 150;
        let d = DVector::from_fn(p, |j, _| {
            (0.25f64.ln() + j as f64 / (p - 1) as f64 * 16.0f64.ln()).exp()
        });
        let w2: Vec<f64> = d.iter().map(|&d| 1.0 / d).collect();
        let scale = 0.8 / w2.iter().sum::<f64>();
        let mu = DVector::from_iterator(p, w2.iter().map(|&w| (w * scale).sqrt()));
        let model = MixtureModel::new(mu, DMatrix::identity(p, p), d.map(f64::sqrt)).unwrap();
        out.push((model, 450));
    }
    {
        let p = 100;
        let d = DVector::from_fn(p, |j, _| if j < p / 2 { 1.0 } else { 5.0 });
        let mu = DVector::from_fn(p, |j, _| {
            if j < p / 2 {
                (1.0 / (p / 2) as f64).sqrt()
            } else {
                0.0
            }
        });
        let model = MixtureModel::new(mu, DMatrix::identity(p, p), d.map(f64::sqrt)).unwrap();
        out.push((model, 800));
    }
    out
}

/// Regularized optimality: over a 20-point log-spaced lambda grid the
/// square loss attains the bias-fixed floor at its own omega = lambda/theta
/// (equality within 1e-6), other losses stay above the floor at theirs,
/// and the grid minimum of the square loss undercuts both competitors.
fn criterion_6() -> Result<String, String> {
    let grid: Vec<f64> = (0..20)
        .map(|k| 1e-3 * (1e6f64).powf(k as f64 / 19.0))
        .collect();
    let mut worst_eq = 0.0f64;
    let mut worst_min_margin = f64::INFINITY;
    for (idx, (model, n)) in anisotropic_models().into_iter().enumerate() {
        let mut minima = [f64::INFINITY; 3];
        for (slot, loss) in [LossSpec::Square, LossSpec::Logistic, LossSpec::Exponential]
            .into_iter()
            .enumerate()
        {
            for &lambda in &grid {
                let state = solve_fixed_point(&model, loss, lambda, n)
                    .map_err(|e| format!("model {idx} {} lambda={lambda}: {e}", loss.name()))?;
                let error = state.predicted_error();
                minima[slot] = minima[slot].min(error);
                let bound = bias_fixed_lower_bound(&model, n, state.bias_ratio())
                    .map_err(|e| format!("model {idx} bound at lambda={lambda}: {e}"))?;
                if loss == LossSpec::Square {
                    let gap = (error - bound).abs();
                    worst_eq = worst_eq.max(gap);
                    if gap > 1e-6 {
                        return Err(format!(
                            "model {idx} square lambda={lambda}: |err-floor|={gap:.2e} > 1e-6"
                        ));
                    }
                } else if error < bound - 1e-6 {
                    return Err(format!(
                        "model {idx} {} lambda={lambda}: err {error:.6} below floor {bound:.6}",
                        loss.name()
                    ));
                }
            }
        }
        for (other, name) in [(minima[1], "logistic"), (minima[2], "exponential")] {
            let margin = other - minima[0];
            worst_min_margin = worst_min_margin.min(margin);
            if margin < 0.0 {
                return Err(format!(
                    "model {idx}: min-over-lambda square {:.6} above {name} {:.6}",
                    minima[0], other
                ));
            }
        }
    }
    Ok(format!(
        "square attains floor within {worst_eq:.1e}; smallest grid-min margin {worst_min_margin:.1e}"
    ))
}

/// Combining logistic and square-root fits: improves on both singles yet
/// never undercuts the square-loss (least squares) theory floor. 300
/// trials per ratio; at n/p=7 the three error levels are pinned to the
/// published coordinates within 0.003.
fn criterion_7() -> Result<String, String> {
    let p = 250;
    let mut mu = DVector::zeros(p);
    mu[0] = 0.6;
    let model = MixtureModel::isotropic(mu, 1.0).map_err(|e| e.to_string())?;
    let trials = 300;
    let mut detail = String::new();

    for (block, n) in [1750usize, 2000].into_iter().enumerate() {
        let th_log = solve_fixed_point(&model, LossSpec::Logistic, 0.0, n)
            .map_err(|e| format!("logistic theory n={n}: {e}"))?
            .predicted_error();
        let th_sqrt = solve_fixed_point(&model, LossSpec::SquareRoot, 0.0, n)
            .map_err(|e| format!("square_root theory n={n}: {e}"))?
            .predicted_error();
        let th_ls = solve_fixed_point(&model, LossSpec::Square, 0.0, n)
            .map_err(|e| format!("square theory n={n}: {e}"))?
            .predicted_error();

        let mut err_log = Vec::with_capacity(trials);
        let mut err_sqrt = Vec::with_capacity(trials);
        let mut err_comb = Vec::with_capacity(trials);
        let mut pred_comb = Vec::with_capacity(trials);
        for trial in 0..trials {
            let seed = 80_000 + (block * trials + trial) as u64;
            let data = model
                .sample_dataset(NoiseLaw::Gaussian, n, seed)
                .map_err(|e| e.to_string())?;
            let sol_log = solve_erm(&data, LossSpec::Logistic, 0.0)
                .map_err(|e| format!("seed {seed} logistic: {e}"))?;
            let sol_sqrt = solve_erm(&data, LossSpec::SquareRoot, 0.0)
                .map_err(|e| format!("seed {seed} square_root: {e}"))?;
            let obs_log = compute_observables(&data, &sol_log, LossSpec::Logistic)
                .map_err(|e| format!("seed {seed}: {e}"))?;
            let obs_sqrt = compute_observables(&data, &sol_sqrt, LossSpec::SquareRoot)
                .map_err(|e| format!("seed {seed}: {e}"))?;
            err_log.push(
                model
                    .classification_error(&sol_log.beta)
                    .map_err(|e| e.to_string())?,
            );
            err_sqrt.push(
                model
                    .classification_error(&sol_sqrt.beta)
                    .map_err(|e| e.to_string())?,
            );
            let combo = optimal_combination(&[obs_log, obs_sqrt], &[sol_log, sol_sqrt], &model)
                .map_err(|e| format!("seed {seed} combination: {e}"))?;
            err_comb.push(
                model
                    .classification_error(&combo.combined_beta)
                    .map_err(|e| e.to_string())?,
            );
            pred_comb.push(combo.predicted_error);
        }

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let m_log = mean(&err_log);
        let m_sqrt = mean(&err_sqrt);
        let m_comb = mean(&err_comb);
        let m_pred = mean(&pred_comb);
        let se = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                / ((v.len() - 1) as f64 * v.len() as f64))
                .sqrt()
        };

        if block == 0 {
            for (value, target, what) in [
                (th_log, 0.3203, "logistic theory"),
                (th_sqrt, 0.3200, "square_root theory"),
                (m_comb, 0.3192, "combined empirical mean"),
            ] {
                let dev = (value - target).abs();
                if dev > 0.003 {
                    return Err(format!(
                        "n/p=7 {what}: {value:.4} vs {target} (|dev|={dev:.4} > 0.003)"
                    ));
                }
            }
        }

        // Paired improvement: combination vs each single on shared datasets.
        for (name, single) in [("logistic", &err_log), ("square_root", &err_sqrt)] {
            let diffs: Vec<f64> = single.iter().zip(&err_comb).map(|(s, c)| s - c).collect();
            let gain = mean(&diffs);
            let gain_se = se(&diffs);
            if gain < 3.0 * gain_se {
                return Err(format!(
                    "n={n}: combination does not improve on {name} \
                     (gain {gain:.5} +- {gain_se:.5})"
                ));
            }
        }

        // Floor: the combination's own prediction never beats the square
        // loss theory (allowing Monte Carlo error on the mean).
        let floor_margin = m_pred - th_ls;
        let allowance = (3.0 * se(&pred_comb)).max(1e-6);
        if floor_margin < -allowance {
            return Err(format!(
                "n={n}: mean combined prediction {m_pred:.5} beats the square floor \
                 {th_ls:.5} by more than {allowance:.1e}"
            ));
        }
        let _ = write!(
            detail,
            "n/p={}: emp {m_log:.4}/{m_sqrt:.4}/{m_comb:.4} floor+{floor_margin:.1e} ",
            n / p
        );
    }
    Ok(detail.trim_end().to_string())
}

/// Universality: Rademacher and bounded-uniform noise at the dense-mean
/// isotropic setup give the same error as the Gaussian theory predicts,
/// within 0.005 over 200 trials per law.
fn criterion_8() -> Result<String, String> {
    let model = dense_ones_model(300, 2.0);
    let n = 900;
    let theory = solve_fixed_point(&model, LossSpec::Logistic, 0.25, n)
        .map_err(|e| format!("fixed point: {e}"))?
        .predicted_error();
    let trials = 200;
    let mut detail = format!("gaussian theory {theory:.4};");
    for (block, law) in [NoiseLaw::Rademacher, NoiseLaw::UniformUnitVariance]
        .into_iter()
        .enumerate()
    {
        let mut errors = Vec::with_capacity(trials);
        for trial in 0..trials {
            let seed = 90_000 + (block * trials + trial) as u64;
            let data = model
                .sample_dataset(law, n, seed)
                .map_err(|e| e.to_string())?;
            let sol = solve_erm(&data, LossSpec::Logistic, 0.25)
                .map_err(|e| format!("{} seed {seed}: {e}", law.name()))?;
            errors.push(
                model
                    .classification_error(&sol.beta)
                    .map_err(|e| e.to_string())?,
            );
        }
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let dev = (mean - theory).abs();
        if dev > 0.005 {
            return Err(format!(
                "{}: mean error {mean:.4} vs theory {theory:.4} (|dev|={dev:.4} > 0.005)",
                law.name()
            ));
        }
        let _ = write!(detail, " {}={mean:.4}", law.name());
    }
    Ok(detail)
}

/// The property suites live behind `mixclass selftest`; they must pass in
/// under two minutes and cover every listed identity.
fn criterion_9() -> Result<String, String> {
    let started = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_mixclass"))
        .arg("selftest")
        .output()
        .map_err(|e| format!("cannot run selftest: {e}"))?;
    let secs = started.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&output.stdout);
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(format!("selftest exited nonzero: {stderr}"));
    }
    if secs >= 120.0 {
        return Err(format!("selftest took {secs:.0}s >= 120s"));
    }
    let required = [
        "prox round-trip",
        "stationarity residual",
        "dual weights balance the features at lambda 0",
        "square loss minimizes the dual objective",
        "least squares aligns with the scatter direction",
        "theta^2 bounded by the dual second moment",
        "gamma/eta at least sqrt(p/n)",
        "square-loss theta equals 1/(1+kappa)",
        "quadrature matches trapezoid",
        "leave-one-out identity",
        "repeated runs are byte-identical",
        "parallel and serial trials agree",
    ];
    for name in required {
        if !stdout.contains(name) {
            return Err(format!("selftest output is missing the '{name}' property"));
        }
    }
    Ok(format!("{} properties in {secs:.0}s", required.len()))
}
