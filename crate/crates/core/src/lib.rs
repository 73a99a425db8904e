//! Simulation of photon-correlation Fourier spectroscopy (PCFS) experiments and a
//! latent neural-ODE forecaster that reconstructs a full g²(τ, t) map from a handful
//! of noisy correlation curves measured at early interferometer delays.
//!
//! The crate is organised bottom-up:
//!
//! - [`physics`]: emitter spectra, spectral diffusion, interferograms and clean g² maps.
//! - [`noise`]: bin-width-proportional Poisson shot noise and input-curve slicing.
//! - [`recover`]: inverse transform from a g² map back to the spectral correlation.
//! - [`dataset`]: parameter sampling, example generation and the on-disk container.
//! - [`diffcalc`]: a small reverse-mode differentiation engine with an RK4 solver.
//! - [`models`]: the LSTM-ODE forecaster and the 1D ResNet baseline.
//! - [`training`]: losses, the Adam training loop, evaluation and baselines.

pub mod checksum;
pub mod dataset;
pub mod diffcalc;
mod error;
pub mod models;
pub mod noise;
pub mod physics;
pub mod recover;
pub mod training;

pub use error::{Error, ErrorKind, Result};
