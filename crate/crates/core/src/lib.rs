//! Boundary guidance and box-focused sampling for 3D Gaussian-splat scenes.
//!
//! * [`model`]: blobs, cameras, covariance construction, EWA projection, compositing.
//! * [`io`]: splat PLY, PPM/PGM and JSON manifests.
//! * [`boundary`]: border tracing and category-colored overlays for posed images.
//! * [`sampling`]: box frustums, per-blob object probabilities, seeded samplers
//!   and the detector feature export.
//! * [`render`]: CPU reference renderer, image losses and a boundary
//!   multi-view stability score.
//! * [`synth`]: synthetic labeled scenes and independent brute-force oracles.

pub mod boundary;
pub mod error;
pub mod io;
pub mod model;
pub mod render;
pub mod rng;
pub mod sampling;
pub mod synth;

pub use error::{Error, Result};
