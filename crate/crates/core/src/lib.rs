//! Skin-tone estimation from dermatoscopic images: color science, pixel
//! baselines, a small ordinal/regression CNN, synthetic ground-truth data,
//! agreement statistics and dataset audits.

#![allow(clippy::needless_range_loop)]

pub mod audit;
pub mod color;
pub mod dataset;
pub mod estimators;
pub mod eval;
pub mod image;
pub mod nn;
pub mod ordinal;
pub mod pipeline;
pub mod stats;
pub mod synth;
