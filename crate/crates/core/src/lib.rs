//! Sampled-belief entropy search (SBES).
//!
//! Locates the maximizer of an expensive, noisy, unimodal function on an
//! interval. A finite ensemble of candidate curves stands in for the unknown
//! truth; every pair of noisy evaluations is turned into a comparison outcome
//! which updates an exact piecewise-constant density over the maximizer
//! location. The next evaluation is the pair `(h, z)` that minimizes the
//! expected posterior entropy one step ahead.
//!
//! Modules, bottom-up:
//!
//! - [`belief`]: the candidate-curve ensemble, Bayesian weight updates and the
//!   comparison probabilities `g` and `g_bar`.
//! - [`posterior`]: the density over the maximizer location.
//! - [`policy`]: the closed-form acquisition, pair selection and the
//!   optimization loop.
//! - [`oracle`]: brute-force mutual-information checks on finite instances.

// negated comparisons reject NaN along with out-of-order values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod domain;
pub mod error;
pub mod normal;
pub mod oracle;
pub mod policy;
pub mod posterior;

pub use belief::{BeliefCurve, BeliefEnsemble, CurveShape, FamilyKind, ParametricFamilySpec};
pub use domain::Interval;
pub use error::{Error, Result};
pub use policy::{
    optimize, AcquisitionValue, Decision, IterationRecord, OptimizeConfig, OptimizeOutcome, Proposal, SearchState,
};
pub use posterior::{ComparisonOutcome, PiecewiseDensity};

/// Clamp applied to every probability that ends up inside a logarithm.
pub const PROB_EPS: f64 = 1e-12;

/// Relative spacing below which two domain points are treated as identical.
pub const MERGE_REL_TOL: f64 = 1e-9;
