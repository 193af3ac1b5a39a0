//! Forward model and inverse analysis for resolved-sideband optical cooling
//! of membrane modes in a cavity, including laser excess phase and amplitude
//! noise.
//!
//! The crate is organised bottom-up:
//!
//! - [`physics`]: susceptibilities, optical damping and spring, occupancy budget.
//! - [`spectrum`]: detection transfer functions, output spectrum, synthetic
//!   periodograms, background shapes.
//! - [`fit`]: weighted Levenberg–Marquardt, peak lineshape fits, cooling-curve
//!   fit, noise-source discrimination and PSD extraction.
//! - [`io`]: spectrum files, JSON configuration and reports, unit conversions.
//! - [`pipeline`]: campaign synthesis and end-to-end analysis used by the CLI.

// `!(x > y)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod fit;
pub mod io;
pub mod physics;
pub mod pipeline;
pub mod spectrum;
