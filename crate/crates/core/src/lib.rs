//! Identification of graphical autoregressive models with dynamical latent
//! variables from observed multivariate time series.
//!
//! The pipeline runs in three stages over a sweep of regularization weights:
//! a sparse-plus-low-rank topology program ([`sparse_lowrank`]), a reweighted
//! nuclear-norm refinement of the AR coefficients ([`reweight`]) and a
//! trace-minimization for the latent factor ([`latent`]). Candidates are
//! scored by relative entropy rate times complexity ([`selection`]).

pub mod covariance;
pub mod data;
pub mod latent;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod solver;
pub mod reweight;
pub mod selection;
pub mod sparse_lowrank;
