//! Two-layer microwave linear analog computer (MiLAC) beamforming for
//! multi-user MISO downlink.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: Rayleigh channel generation and the range-space reduction
//!   that shrinks the precoder from `L x K` to `K x K`.
//! - [`network`]: susceptance / admittance / scattering representations of a
//!   lossless reciprocal multiport network and beamformer extraction.
//! - [`mapping`]: closed-form synthesis of the two scattering matrices and
//!   amplifier gains that reproduce any digital precoder exactly.
//! - [`optimizer`]: fractional-programming sum-rate solver with projected
//!   successive linear approximation over the reduced variable.
//! - [`baselines`]: full-dimension solver, zero forcing and a brute-force
//!   oracle used for validation.
//! - [`harness`]: Monte-Carlo sweeps with CSV / JSON-lines output.
//!
//! Rates are reported in bit/s/Hz (base-2 logarithm) unless a function says
//! otherwise.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mapping;
pub mod matrix_io;
pub mod network;
pub mod optimizer;

pub use error::{MilacError, Result};
pub use linalg::{CMat, RMat};
pub use num_complex::Complex64;
