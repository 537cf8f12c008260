//! Generalized rank regression.
//!
//! Linear-model coefficients are estimated by minimizing a weighted sum of
//! ordered residuals, where the weights come from a score-generating
//! function on (0,1). Monotone scores give convex objectives (Wilcoxon,
//! single-level); the efficient score for a given noise density is often
//! non-monotone, making the loss non-convex and non-smooth. The crate
//! provides:
//!
//! - score construction, normalization, estimation, and tabulation
//!   ([`score`], [`kde`]);
//! - the rank loss and its generalized gradients ([`loss`]);
//! - a two-stage subgradient solver: convex surrogate with decaying steps,
//!   then constant-step descent on the target loss ([`optim`]);
//! - multiplier-bootstrap confidence intervals ([`bootstrap`]);
//! - the correspondence with weighted composite quantile regression and
//!   asymptotic-variance calculators on both sides ([`cqr`]);
//! - noise models and a Monte-Carlo benchmark harness ([`sim`]).
//!
//! The numeric core is generic over [`Float`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar for the common case.

pub mod bootstrap;
pub mod cqr;
pub mod error;
pub mod float;
pub mod kde;
pub mod linalg;
pub mod loss;
pub mod noise;
pub mod optim;
pub mod quad;
pub mod score;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use float::Float;

pub use bootstrap::{
    rademacher_multipliers, run_bootstrap, BootstrapConfig, BootstrapResult, IntervalMode,
    ReplicateInit,
};
pub use cqr::{
    cqr_asymptotic_variance, grr_asymptotic_variance, scores_to_weights, variance_convergence_check,
    weights_to_scores, CqrWeights,
};
pub use kde::{estimate_optimal_generator, EstimateOptions};
pub use loss::{
    convexity_probe, loss, ranks, subgradient, weighted_loss, weighted_subgradient, Dataset,
    RankVector,
};
pub use noise::{
    fisher_information, Cauchy, GaussianMixture, Laplace, NoiseDensity, Normal, SmoothedUniform,
};
pub use optim::{fit, stage_one, stage_two, step_schedule, FitOptions, FitResult};
pub use score::{optimal_generator, ScoreGenerator, ScoreKind, ScoreTable};
pub use sim::{gen_design, ks_statistic, run_cell, run_trial, Method, NoiseModel, SimConfig};

/// `f64` aliases for the main entry points.
pub type ScoreGenerator64 = score::ScoreGenerator<f64>;
pub type ScoreTable64 = score::ScoreTable<f64>;
pub type Dataset64 = loss::Dataset<f64>;
pub type FitResult64 = optim::FitResult<f64>;
pub type FitOptions64 = optim::FitOptions<f64>;
pub type BootstrapConfig64 = bootstrap::BootstrapConfig<f64>;
pub type BootstrapResult64 = bootstrap::BootstrapResult<f64>;
pub type SimConfig64 = sim::SimConfig<f64>;
