//! Inception temporal convolutional network for motor-imagery EEG.
//!
//! The crate covers the full pipeline: a small reverse-mode autodiff core
//! ([`tensor`]), the network itself ([`model`]), the trial container and
//! preprocessing ([`data`]), the cross-validated training protocol and
//! evaluation scenarios ([`train`]), kernel-spectrum and spatial-pattern
//! explanations ([`explain`]) and the significance tests used to compare
//! classifiers ([`stats`]).

pub mod data;
pub mod explain;
pub mod fsio;
pub mod kv;
pub mod model;
pub mod stats;
pub mod tensor;
pub mod train;
