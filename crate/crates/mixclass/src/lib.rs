//! High-dimensional two-class mixture classification toolkit.
//!
//! The crate fits ridge-regularized empirical risk minimizers for a family of
//! smooth convex losses on Gaussian (and generic) mixture data, evaluates their
//! exact population error, and solves the deterministic self-consistent system
//! that predicts that error in the large `n, p` regime. On top of the
//! single-classifier machinery it provides plug-in estimators of the
//! fixed-point scalars from one fitted classifier and optimal linear
//! combination of several classifiers fitted on one dataset.

pub mod combine;
pub mod loss;
pub mod model;
pub mod observables;
pub mod quad;
pub mod solver;
pub mod theory;

pub use combine::{
    optimal_combination, predicted_combination_error, CombinationResult, CombineError,
};
pub use loss::{builtin_loss, LossError, LossSpec};
pub use model::{q_function, Dataset, MixtureModel, ModelError, NoiseLaw};
pub use observables::{
    compute_observables, cross_correlation, stochastic_error_prediction, EmpiricalObservables,
    ObservablesError,
};
pub use quad::{gh127, trapezoid_expect, GaussHermite};
pub use solver::{
    solve_erm, solve_erm_warm, solve_lda, solve_least_squares, ErmSolution, SolverError,
};
pub use theory::{
    bias_fixed_lower_bound, bias_fixed_snr_bound, calibrate_lambda_for_bias, solve_fixed_point,
    TheoryError, TheoryState,
};
