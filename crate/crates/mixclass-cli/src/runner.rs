//! Grid expansion and Monte Carlo trial execution.
//!
//! A run crosses `losses x lambdas x ns`; every grid point gets
//! `replications` trials with seeds `base_seed + global_trial_index` counted
//! in grid-major order. Trials are pure functions of the seed, so the worker
//! pool never changes results; rows stream through an ordered sink that
//! restores grid-major order before anything touches the file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use mixclass::{
    compute_observables, solve_erm, solve_fixed_point, stochastic_error_prediction, LossSpec,
    MixtureModel, NoiseLaw, SolverError, TheoryState,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::Experiment;
use crate::plot::{histogram, Plot};

pub const CSV_HEADER: &str = "trial,seed,loss,lambda,n,p,err_emp,err_stoch,err_theory,\
theta_hat,eta_hat,gamma_hat,kappa_hat,theta,eta,gamma,kappa,status,ms";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Unregularized fit on linearly separable data: no minimizer exists.
    Separable,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Separable => "separable",
            Status::Error => "error",
        }
    }
}

/// One CSV row. Fields that could not be computed stay `None` and print as
/// empty cells; `status` says why.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub loss: LossSpec,
    pub lambda: f64,
    pub n: usize,
    pub p: usize,
    pub err_emp: Option<f64>,
    pub err_stoch: Option<f64>,
    pub err_theory: Option<f64>,
    pub theta_hat: Option<f64>,
    pub eta_hat: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub kappa_hat: Option<f64>,
    pub theta: Option<f64>,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub status: Status,
    pub ms: u64,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrialRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.seed,
            self.loss.name(),
            self.lambda,
            self.n,
            self.p,
            cell(self.err_emp),
            cell(self.err_stoch),
            cell(self.err_theory),
            cell(self.theta_hat),
            cell(self.eta_hat),
            cell(self.gamma_hat),
            cell(self.kappa_hat),
            cell(self.theta),
            cell(self.eta),
            cell(self.gamma),
            cell(self.kappa),
            self.status.as_str(),
            self.ms
        )
    }
}

/// One grid point of the run.
#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub loss: LossSpec,
    pub lambda: f64,
    pub n: usize,
}

pub fn expand_grid(exp: &Experiment) -> Vec<GridPoint> {
    let mut grid = Vec::with_capacity(exp.losses.len() * exp.lambdas.len() * exp.ns.len());
    for &loss in &exp.losses {
        for &lambda in &exp.lambdas {
            for &n in &exp.ns {
                grid.push(GridPoint { loss, lambda, n });
            }
        }
    }
    grid
}

/// Buffers out-of-order rows and flushes contiguous prefixes, so workers can
/// finish in any order while the file stays in grid-major row order.
struct OrderedSink<W: Write> {
    next: usize,
    pending: BTreeMap<usize, TrialRecord>,
    records: Vec<TrialRecord>,
    out: W,
}

impl<W: Write> OrderedSink<W> {
    fn new(out: W) -> Self {
        OrderedSink {
            next: 0,
            pending: BTreeMap::new(),
            records: Vec::new(),
            out,
        }
    }

    fn push(&mut self, index: usize, record: TrialRecord) -> std::io::Result<()> {
        self.pending.insert(index, record);
        while let Some(record) = self.pending.remove(&self.next) {
            writeln!(self.out, "{}", record.csv_row())?;
            self.records.push(record);
            self.next += 1;
        }
        Ok(())
    }
}

/// Runs every trial of the experiment, streaming CSV rows to `exp.csv_path`
/// and returning the records in grid-major order.
pub fn run_experiment(exp: &Experiment, serial: bool) -> Result<Vec<TrialRecord>, RunError> {
    let io_err = |source| RunError::Io {
        path: exp.csv_path.clone(),
        source,
    };
    if let Some(dir) = exp.csv_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
    }
    let mut file = std::fs::File::create(&exp.csv_path).map_err(io_err)?;
    writeln!(file, "{CSV_HEADER}").map_err(io_err)?;

    let grid = expand_grid(exp);
    // The deterministic prediction is a property of the grid point, solved
    // once and copied into each of its rows.
    let theories: Vec<Option<TheoryState>> = grid
        .iter()
        .map(
            |point| match solve_fixed_point(&exp.model, point.loss, point.lambda, point.n) {
                Ok(state) => Some(state),
                Err(err) => {
                    eprintln!(
                        "warning: no deterministic prediction for loss={} lambda={} n={}: {err}",
                        point.loss.name(),
                        point.lambda,
                        point.n
                    );
                    None
                }
            },
        )
        .collect();

    let total = grid.len() * exp.replications;
    let sink = Mutex::new(OrderedSink::new(file));
    let run_one = |row: usize| {
        let point = &grid[row / exp.replications];
        let trial = row % exp.replications;
        let seed = exp.base_seed + row as u64;
        let record = run_trial(
            &exp.model,
            exp.noise,
            *point,
            trial,
            seed,
            theories[row / exp.replications].as_ref(),
            exp.measure_time,
        );
        sink.lock()
            .expect("sink poisoned")
            .push(row, record)
            .map_err(io_err)
    };
    if serial {
        (0..total).try_for_each(run_one)?;
    } else {
        (0..total).into_par_iter().try_for_each(run_one)?;
    }

    let sink = sink.into_inner().expect("sink poisoned");
    debug_assert_eq!(sink.records.len(), total);
    if let Some(plot_path) = &exp.plot_path {
        write_summary_plot(exp, &grid, &sink.records, plot_path.clone())?;
    }
    Ok(sink.records)
}

/// Samples, fits, and measures one trial. Infeasible stages leave their
/// fields empty rather than aborting the run.
pub fn run_trial(
    model: &MixtureModel,
    noise: NoiseLaw,
    point: GridPoint,
    trial: usize,
    seed: u64,
    theory: Option<&TheoryState>,
    measure_time: bool,
) -> TrialRecord {
    let started = Instant::now();
    let mut record = TrialRecord {
        trial,
        seed,
        loss: point.loss,
        lambda: point.lambda,
        n: point.n,
        p: model.p(),
        err_emp: None,
        err_stoch: None,
        err_theory: theory.map(TheoryState::predicted_error),
        theta_hat: None,
        eta_hat: None,
        gamma_hat: None,
        kappa_hat: None,
        theta: theory.map(|t| t.theta),
        eta: theory.map(|t| t.eta),
        gamma: theory.map(|t| t.gamma),
        kappa: theory.map(|t| t.kappa),
        status: Status::Ok,
        ms: 0,
    };

    let outcome = (|| -> Result<(), Status> {
        let data = model
            .sample_dataset(noise, point.n, seed)
            .map_err(|_| Status::Error)?;
        let sol = match solve_erm(&data, point.loss, point.lambda) {
            Ok(sol) => sol,
            Err(SolverError::Separable { .. }) => return Err(Status::Separable),
            Err(_) => return Err(Status::Error),
        };
        record.err_emp = model.classification_error(&sol.beta).ok();
        let obs = compute_observables(&data, &sol, point.loss).map_err(|_| Status::Error)?;
        record.theta_hat = Some(obs.theta_hat);
        record.eta_hat = Some(obs.eta_hat);
        record.gamma_hat = Some(obs.gamma_hat);
        record.kappa_hat = Some(obs.kappa_hat);
        record.err_stoch = stochastic_error_prediction(&obs, model, point.lambda).ok();
        Ok(())
    })();
    if let Err(status) = outcome {
        record.status = status;
    }
    if measure_time {
        record.ms = started.elapsed().as_millis() as u64;
    }
    record
}

/// Mean of an optional field over the rows of one grid point.
pub fn grid_mean(
    records: &[TrialRecord],
    replications: usize,
    grid_index: usize,
    field: impl Fn(&TrialRecord) -> Option<f64>,
) -> Option<f64> {
    let rows = &records[grid_index * replications..(grid_index + 1) * replications];
    let values: Vec<f64> = rows.iter().filter_map(field).collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Error-vs-grid summary: theory curve per loss plus mean empirical points.
/// The x axis is whichever grid has more than one value (lambda wins ties).
/// A single grid point with many replications degenerates to one dot, so
/// that case shows the spread of the trials instead.
fn write_summary_plot(
    exp: &Experiment,
    grid: &[GridPoint],
    records: &[TrialRecord],
    path: PathBuf,
) -> Result<(), RunError> {
    if let Some(plot) = single_point_histogram(exp, grid, records) {
        return plot
            .write(&path)
            .map_err(|source| RunError::Io { path, source });
    }
    let over_lambda = exp.lambdas.len() > 1 || exp.ns.len() == 1;
    let x_of = |point: &GridPoint| {
        if over_lambda {
            point.lambda
        } else {
            point.n as f64
        }
    };
    let mut plot = Plot::new(
        "classification error",
        if over_lambda { "lambda" } else { "n" },
        "error",
    );
    if over_lambda && exp.lambdas.iter().all(|&l| l > 0.0) {
        plot = plot.log_x();
    }
    for &loss in &exp.losses {
        let mut theory_curve = Vec::new();
        let mut empirical = Vec::new();
        for (gi, point) in grid.iter().enumerate() {
            if point.loss.name() != loss.name() {
                continue;
            }
            if let Some(err) = grid_mean(records, exp.replications, gi, |r| r.err_theory) {
                theory_curve.push((x_of(point), err));
            }
            if let Some(err) = grid_mean(records, exp.replications, gi, |r| r.err_emp) {
                empirical.push((x_of(point), err));
            }
        }
        if !theory_curve.is_empty() {
            plot = plot.line(&format!("{} theory", loss.name()), theory_curve);
        }
        if !empirical.is_empty() {
            plot = plot.scatter(&format!("{} empirical", loss.name()), empirical);
        }
    }
    plot.write(&path)
        .map_err(|source| RunError::Io { path, source })
}

fn single_point_histogram(
    exp: &Experiment,
    grid: &[GridPoint],
    records: &[TrialRecord],
) -> Option<Plot> {
    if grid.len() != 1 || exp.replications < 2 {
        return None;
    }
    let values: Vec<f64> = records.iter().filter_map(|r| r.err_emp).collect();
    if values.len() < 2 {
        return None;
    }
    let (edges, densities) = histogram(&values, exp.histogram_bins);
    let peak = densities.iter().cloned().fold(0.0, f64::max);
    let point = &grid[0];
    let title = format!(
        "error over {} trials: {} lambda={} n={}",
        values.len(),
        point.loss.name(),
        point.lambda,
        point.n
    );
    let mut plot = Plot::new(&title, "empirical error", "density").bars(edges, densities);
    if let Some(theory) = records.iter().find_map(|r| r.err_theory) {
        plot = plot.line("theory", vec![(theory, 0.0), (theory, peak)]);
    }
    Some(plot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn tiny_experiment(dir: &Path) -> Experiment {
        let text = format!(
            "[model]\np = 24\nmu = \"ones\"\nmu_norm2 = 1.0\ncov = \"identity\"\n\
             [data]\nnoise = \"gaussian\"\nn = [96]\n\
             [fit]\nlosses = [\"logistic\", \"square\"]\nlambda = [0.1, 1.0]\n\
             [run]\nreplications = 3\nbase_seed = 41\n\
             [output]\ncsv = \"{}\"\n",
            dir.join("out.csv").display()
        );
        Experiment::from_toml(&text, dir).unwrap()
    }

    #[test]
    fn rows_are_grid_major_and_seeded_by_counter() {
        let dir = tempdir();
        let exp = tiny_experiment(&dir);
        let records = run_experiment(&exp, true).unwrap();
        assert_eq!(records.len(), 2 * 2 * 3);
        for (row, record) in records.iter().enumerate() {
            assert_eq!(record.seed, 41 + row as u64);
            assert_eq!(record.trial, row % 3);
        }
        assert_eq!(records[0].loss.name(), "logistic");
        assert_eq!(records[0].lambda, 0.1);
        assert_eq!(records[3].lambda, 1.0);
        assert_eq!(records[6].loss.name(), "square");
        for record in &records {
            assert_eq!(record.status, Status::Ok);
            assert_eq!(record.ms, 0);
            for err in [record.err_emp, record.err_stoch, record.err_theory] {
                let err = err.unwrap();
                assert!((0.0..=1.0).contains(&err));
            }
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn parallel_and_serial_runs_emit_identical_bytes() {
        let dir = tempdir();
        let exp = tiny_experiment(&dir);
        run_experiment(&exp, true).unwrap();
        let serial = std::fs::read(&exp.csv_path).unwrap();
        run_experiment(&exp, false).unwrap();
        let parallel = std::fs::read(&exp.csv_path).unwrap();
        assert_eq!(serial, parallel);
        assert!(!serial.is_empty());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn separable_trials_are_recorded_not_dropped() {
        // Strong signal, tiny sample: unregularized logistic data are
        // separable with overwhelming probability.
        let dir = tempdir();
        let text = format!(
            "[model]\np = 6\nmu = \"ones\"\nmu_norm2 = 25.0\ncov = \"identity\"\n\
             [data]\nnoise = \"gaussian\"\nn = [12]\n\
             [fit]\nlosses = [\"logistic\"]\nlambda = [0.0]\n\
             [run]\nreplications = 4\nbase_seed = 7\n\
             [output]\ncsv = \"{}\"\n",
            dir.join("sep.csv").display()
        );
        let exp = Experiment::from_toml(&text, &dir).unwrap();
        let records = run_experiment(&exp, true).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().any(|r| r.status == Status::Separable));
        let csv = std::fs::read_to_string(&exp.csv_path).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains(",separable,"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "mixrun-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}
