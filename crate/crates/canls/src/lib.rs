//! Detection and localization of multiple scatterers along elevation in
//! SAR tomography.
//!
//! A stack of `N` coregistered SAR acquisitions observes, in every
//! range-azimuth pixel, the superposition of the responses of all scatterers
//! that lay over into that pixel. Each scatterer at elevation `s`
//! contributes a complex exponential across the baseline stack (a steering
//! vector), so recovering the number of scatterers and their elevations is a
//! sinusoid-in-noise estimation problem with very few samples.
//!
//! The toolkit implements a two-step detector:
//!
//! 1. **Coarse stage** ([`coarse`]): a sequential CFAR test built on
//!    beamforming correlations picks candidate peaks and brackets each one
//!    with a window of one Rayleigh resolution unit, cheaply rejecting empty
//!    pixels and shrinking the search space.
//! 2. **Fine stage** ([`fine`]): an exhaustive nonlinear least squares
//!    search over the reduced candidate set combined with penalized model
//!    order selection (AIC / BIC / corrected AIC) fixes the number of
//!    scatterers and their elevations at super-resolution separations.
//!
//! Reference single-step detectors (sequential GLRT with cancellation, full
//! exhaustive NLS, and an `ℓ₁`-relaxation pipeline) live in [`baselines`],
//! and closed-form performance predictions (detection probability,
//! Cramér–Rao bounds) in [`analytic`].
//!
//! The crate is `no_std`-compatible (requires `alloc`); the companion
//! simulation crate carries file formats, CLI, and experiment harnesses.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analytic;
pub mod baselines;
pub mod coarse;
pub mod error;
pub mod fine;
pub mod geometry;
pub mod linalg;
pub mod scene;

pub use error::{Error, Result};
pub use geometry::{SteeringMatrix, TomoGeometry};

/// Complex sample type used throughout: double-precision circular data.
pub type C64 = num_complex::Complex<f64>;
