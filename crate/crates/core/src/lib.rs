//! Quasi-Bayesian estimation of nonparametric instrumental-variables models
//! `E[Y | W] = E[g₀(X) | W]` on sieve spaces.
//!
//! The pipeline runs
//! [`design`] (or real data) → [`moments`] → [`posterior`] → [`analysis`],
//! and [`harness`] strings the pieces into reproducible simulation studies
//! and the `npiv-qb` command-line tool.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod design;
pub mod error;
pub mod harness;
pub mod moments;
pub mod posterior;
pub mod priors;
pub mod stats;

pub use basis::{Basis, BasisKind, SieveCoefficients};
pub use design::{Design, DesignSpec, IllPosedness, Sample};
pub use error::{Error, Result};
pub use moments::EmpiricalMoments;
pub use posterior::{GaussianLaw, PosteriorResult, SamplerConfig};
pub use priors::{Prior, PriorFamily};
