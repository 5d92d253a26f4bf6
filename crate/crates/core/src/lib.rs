//! Bayesian stochastic block models for weighted networks.
//!
//! This crate implements three block models for symmetric integer-weighted
//! networks, all sharing a dynamic mixture-of-finite-mixtures prior on the
//! partition so the number of communities is inferred from the data:
//!
//! * [`kernel::zinb`] — zero-inflated negative binomial kernel with
//!   block-specific parameters, fitted by a partially collapsed Gibbs sampler.
//! * [`kernel::czinb`] — the covariate extension, where zero inflation and the
//!   count component are driven by pairwise covariates through block-specific
//!   logistic regressions, made conjugate by Pólya-Gamma augmentation.
//! * [`kernel::zip`] — a zero-inflated Poisson baseline on the same
//!   scaffolding.
//!
//! Supporting machinery: random-variate generation ([`dist`]), network data
//! handling and synthetic generators ([`net`]), partition bookkeeping
//! ([`partition`]), the shared telescoping-sampler steps ([`dmfm`]), chain
//! storage ([`chain`]), clustering point estimates and uncertainty summaries
//! ([`summary`]), and posterior-predictive link prediction ([`predict`]).

pub mod chain;
pub mod dist;
pub mod dmfm;
pub mod error;
pub mod gir;
pub mod kernel;
pub mod net;
pub mod partition;
pub mod predict;
pub mod rng;
pub mod summary;

pub use error::{Error, Result};
pub use rng::RngStream;
