//! Link-level simulation and analytic rate evaluation for multi-cell,
//! multi-user large-scale antenna systems: collocated massive MIMO and
//! large-scale distributed MIMO where every cell has `N` remote radio units
//! (RRUs) of `M` antennas each.
//!
//! The crate is organised along the processing chain:
//!
//! - [`scenario`]: configuration, hexagonal layout, user dropping and
//!   large-scale fading.
//! - [`channel`]: correlated Rayleigh channel synthesis.
//! - [`estimation`]: pilot observation under full pilot reuse, MMSE
//!   estimation and the associated covariances.
//! - [`rate_mc`]: instantaneous and ergodic uplink sum-rate with an MMSE
//!   receiver.
//! - [`asymptotic`]: deterministic-equivalent sum-rate and its collocated and
//!   large-array limits.
//! - [`reciprocity`]: TDD RF mismatch, zero-forcing precoding with and
//!   without calibration, and the ergodic sum-rate lower bound.
//! - [`harness`]: configuration files, experiment orchestration and CSV
//!   output used by the `simulate` binary.
//!
//! All rates are in bits/s/Hz.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotic;
pub mod channel;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod rate_mc;
pub mod reciprocity;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
