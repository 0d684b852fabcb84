//! Trend filtering of order `r`: constrained and penalized estimators, the
//! subdifferential machinery behind their tuning, exact matrix identities
//! for the difference operators, and a seeded Monte-Carlo risk harness.

pub mod error;
pub mod harness;
pub mod knots;
pub mod linalg;
pub mod rng;
pub mod solvers;
pub mod subdiff;
pub mod verify;

pub use error::{Error, Result};
pub use knots::{
    capital_delta_r, delta_r, ghos_bound, knot_profile, min_length_ok, sample_signal, Builtin,
    Grid, KnotProfile, SignalSpec,
};
pub use linalg::{diff, heads, reconstruct, sparsity, variation, DiffOrder, Signal};
pub use solvers::{
    constrained_budget, effective_penalty, fit_constrained, fit_l0_r1, fit_penalized,
    fit_penalized_scaled, isotonic, select_lambda_cv, tv1d_exact, ConstrainedMethod, CvSelection,
    PenalizedMethod, SolverOptions, SolverResult,
};
pub use subdiff::{
    a_transform, a_transform_inverse, build_spec, lambda_star, lambda_z, min_norm_affine,
    min_norm_subdiff, subdiff_membership, tuning_rules, LambdaStar, SubdiffSpec, TuningRule,
};
