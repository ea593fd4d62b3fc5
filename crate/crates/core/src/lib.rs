//! Convolutional dictionary learning and sparse coding for lung CT enhancement.
//!
//! The crate implements a slice-wise 2D pipeline: CT volumes are clipped to a
//! Hounsfield window and rescaled to [0, 1], cropped to the volume of interest
//! around a mask, and decomposed into Tikhonov lowpass/highpass components.
//! A convolutional dictionary of small unit-norm filters is learned from
//! airway-containing patches of the highpass signal by alternating ADMM
//! sparse coding and constrained dictionary updates; the learned dictionary
//! (after pruning unused atoms and augmenting with flips/rotations) then
//! sparse-codes whole volumes slice by slice to produce an enhancement
//! reconstruction.
//!
//! Modules follow the pipeline stages:
//!
//! - [`tensor_io`]: NPY volume/mask/dictionary persistence, PNG slice
//!   rendering, JSON pipeline configuration.
//! - [`spectral`]: 2D FFTs, the Tikhonov lowpass/highpass split, and the
//!   per-frequency linear solvers used by both ADMM stages.
//! - [`preprocess`]: HU clipping, VoI cropping, seeded patch sampling.
//! - [`csc`]: the ADMM convolutional sparse coding solver.
//! - [`cdl`]: dictionary learning, pruning, and augmentation.
//! - [`pipeline`]: end-to-end orchestration plus MIP projection.
//! - [`metrics`]: Dice overlap, sparsity statistics, PSNR.
//!
//! All solver-facing arrays are `f64`; randomness comes from the documented
//! [`rng::SplitMix64`] generator so seeded runs reproduce exactly.

pub mod cdl;
pub mod csc;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod spectral;
pub mod tensor_io;

pub use error::{Error, Result};
