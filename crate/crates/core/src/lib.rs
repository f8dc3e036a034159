//! Desk-scale simulation laboratory for quantum state certification with
//! incoherent measurements.
//!
//! The crate provides:
//! - [`states`]: density matrices, spectra, trace distance, fidelity and
//!   Schatten quasi-norms;
//! - [`ensembles`]: truncated GOE*/Ginibre samplers and the hard-instance
//!   families used in the lower-bound constructions;
//! - [`measurement`]: rank-1 POVMs, adaptive strategies and learning-tree
//!   transcript simulation;
//! - [`likelihood`]: exact (subset-DP), matching-sum and Monte-Carlo
//!   likelihood-ratio engines plus the K/H/kappa martingale diagnostics;
//! - [`bounds`]: eigenvalue bucketing, perturbation tuning and the
//!   instance-optimal copy-complexity calculator;
//! - [`experiments`]: config-driven experiment runners behind the `qcert`
//!   command-line interface.

pub mod bounds;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod likelihood;
pub mod measurement;
pub mod rng;
pub mod states;

pub use error::{Error, Result};
