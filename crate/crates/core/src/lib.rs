//! Linear scalar perturbations of spatially flat FLRW cosmologies on the
//! three-torus.
//!
//! The crate is organised bottom-up:
//!
//! * [`eos`] and [`background`] solve the homogeneous cosmology.
//! * [`spectral`] stores real fields on `T^3` by Fourier coefficients.
//! * [`evolver`] integrates the perturbation potential mode by mode.
//! * [`singularity`] builds and fits the expansions near the big bang.
//! * [`latetime`] extracts wave profiles and frozen limits at late times.

pub mod background;
pub mod eos;
pub mod error;
pub mod evolver;
pub mod fit;
pub mod latetime;
pub mod ode;
pub mod random;
pub mod singularity;
pub mod spectral;

pub use eos::EquationOfState;
pub use error::{Error, Result};
