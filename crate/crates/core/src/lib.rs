//! Audio clip classification from pseudo Wigner-Ville time-frequency images.
//!
//! The pipeline runs clip audio through channel averaging, anti-alias
//! decimation, clip-length standardization and the analytic signal, renders
//! a pseudo Wigner-Ville image, resizes and normalizes it, and classifies
//! the result with a small convolutional network trained from scratch.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod config;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod nn;
pub mod signal;
pub mod synth;
pub mod tfd;
pub mod workflow;

pub use analytic::{analytic_signal, fft, ComplexSignal};
pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
pub use signal::Signal;
pub use tfd::{LagWindow, TfdImage, TfdKind};
