//! Restoration of image sequences degraded by atmospheric turbulence.
//!
//! The pipeline estimates dense optical flow from a keyframe to every frame,
//! averages the flows and inverts the mean to recover the keyframe's own
//! deformation, composes the two to register every frame onto a common
//! undistorted grid, and averages the registered frames into a template.
//! The template is then sharpened by blind deconvolution with a parametric
//! Gaussian kernel under a total-variation prior.
//!
//! A forward simulator ([`turbsim`]) generates synthetic turbulent sequences
//! with known ground truth, and a Fourier-optics synthesizer validates the
//! Gaussian approximation of the long-exposure point spread function.

pub mod deconv;
pub mod error;
mod filter;
pub mod float;
pub mod flow;
pub mod imgio;
pub mod metrics;
pub mod register;
pub mod turbsim;

pub use error::{Error, Result};
pub use float::Scalar;
pub use flow::FlowField;
pub use imgio::Image;

/// Single-precision image.
pub type ImageF32 = Image<f32>;
/// Double-precision image.
pub type ImageF64 = Image<f64>;
/// Single-precision flow field.
pub type FlowFieldF32 = FlowField<f32>;
/// Double-precision flow field.
pub type FlowFieldF64 = FlowField<f64>;
