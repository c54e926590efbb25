//! Reconstruction of a binary spatial random field from compressed sensor
//! time series.
//!
//! A latent Gaussian field thresholded at a constant drives, at every
//! monitored location, a warped temporal Gaussian process whose law depends
//! on the local binary label. Point sensors observe noisy samples of that
//! process and integral sensors observe noisy interval integrals; each
//! sensor compresses its series to a single bit with a likelihood-ratio
//! test (a Laplace-approximated test for point observations, a
//! rejection-sampling test for integral observations). A fusion step then
//! reconstructs the field anywhere via the best linear unbiased estimator
//! of the latent value given the bits.
//!
//! The crate is organized along that pipeline:
//!
//! * [`kernel`], [`mvn`], [`rng`], [`special`], [`bvn`] — numerical substrate
//! * [`warp`] — the warping functions and their inverses
//! * [`field`] — scene simulation (spatial field, temporal draws, sensors)
//! * [`wgplrt`], [`nlrt`] — the two per-sensor tests
//! * [`calibration`] — Monte-Carlo thresholds, channels, ROC curves
//! * [`sblue`] — the fusion-center estimator and its Bayes risk
//! * [`harness`] — experiment configs, metrics, baselines, batch runs

pub mod bvn;
pub mod calibration;
pub mod error;
pub mod field;
pub mod harness;
pub mod kernel;
pub mod mvn;
pub mod nlrt;
pub mod rng;
pub mod sblue;
pub mod special;
pub mod warp;
pub mod wgplrt;

pub use error::{Error, Result};
pub use rng::RngStream;
