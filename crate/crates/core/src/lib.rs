//! Evaluation of 3D binary segmentations against ground truth.
//!
//! - [`volume`] / [`nifti`]: grids, masks, thresholding and NIfTI-1 I/O.
//! - [`voxel_metrics`]: confusion-count metrics (overlap, volume,
//!   information-theoretic, probabilistic).
//! - [`surface`]: border extraction and HD95 / ASSD / Mahalanobis distance.
//! - [`instance`]: connected components, lesion pairing, patient- and
//!   object-wise detection.
//! - [`cohort`]: threshold sweeps, pooled fold estimates, volume bins and
//!   metric correlation matrices.
//! - [`oracle`] / [`selftest`]: brute-force reference implementations and
//!   the suites comparing them against the production kernels.

#![allow(clippy::needless_range_loop)]

pub mod cohort;
pub mod error;
pub mod instance;
pub mod nifti;
pub mod oracle;
pub mod selftest;
pub mod stats;
pub mod surface;
pub mod synthetic;
pub mod volume;
pub mod voxel_metrics;

pub use error::{Error, NiftiError, Result};
