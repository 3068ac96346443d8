//! Integrated nested Laplace approximation for latent Gaussian models whose
//! latent field is a Gaussian Markov random field with a sparse precision.
//!
//! The crate is organised bottom-up:
//!
//! - [`sparse`]: sparse symmetric precision matrices, Cholesky factorization,
//!   sampling, partial inversion and linear constraints.
//! - [`latent`]: structure matrices for the latent components (iid, rw1, rw2,
//!   besag, ar1), Kronecker grouping and assembly of the joint prior.
//! - [`likelihood`]: per-observation likelihoods and the sparse observation
//!   matrix linking the latent field to linear predictors.
//! - [`gaussian`]: Newton mode finding and the mode-matched Gaussian
//!   approximation of the latent conditional.
//! - [`engine`]: Laplace approximation of the hyperparameter posterior,
//!   grid exploration and posterior marginals.
//! - [`oracle`]: brute-force quadrature and dense linear algebra used to
//!   check the engine.
//! - [`cli`]: model documents, CSV data loading and the batch runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod gaussian;
pub mod latent;
pub mod likelihood;
pub mod oracle;
pub mod par;
pub mod sparse;

pub use error::{Error, Result};
