//! Power spectrum recovery for multi-reference alignment under random
//! translations, dilations and additive noise.
//!
//! The pipeline: simulate observations ([`signal_model`]), build a Morlet
//! filter bank ([`wavelet`]), estimate the noise level and dilation moments
//! ([`moments`]), form unbiased power spectrum or wavelet invariant estimates
//! ([`estimators`]) and invert the invariants back to a power spectrum
//! ([`inversion`]). [`em_baseline`] is an expectation-maximization comparator
//! on small grids.

pub mod em_baseline;
pub mod error;
pub mod estimators;
pub mod inversion;
pub mod moments;
pub mod quad;
pub mod signal_model;
pub mod wavelet;

pub use error::{Error, Result};
