//! Shear-wave elastography workbench.
//!
//! Synthesizes plane-wave RF data from virtual phantoms with a known shear
//! wave speed, runs the classical pre-processing chain (delay-and-sum,
//! Loupas motion estimation, denoising, time-of-flight), builds the four
//! pre-processing dataset variants and evaluates velocity predictions.
//!
//! # Modules
//! - [`domain`]: probe, grid and sequence types
//! - [`rf_sim`]: point-scatterer RF simulator with a travelling shear pulse
//! - [`beamform`]: plane-wave DAS and B-mode
//! - [`motion`]: analytic signal, IQ demodulation, Loupas estimator
//! - [`denoise`]: median filter and morphological masking
//! - [`tof`]: time-of-flight speed estimation
//! - [`pipeline`]: variant (a)–(d) wiring
//! - [`dataset`]: subsequence splitting, downsampling, labels, manifests
//! - [`tensor`]: `.swt` tensor file format
//! - [`stats`] and [`report`]: evaluation statistics and tables

pub mod beamform;
pub mod dataset;
pub mod denoise;
pub mod domain;
pub mod error;
pub mod motion;
pub mod pipeline;
pub mod report;
pub mod rf_sim;
pub mod stats;
pub mod tensor;
pub mod tof;

pub use error::{Error, Result};
