//! Disease-specific attention networks for ECG arrhythmia detection.
//!
//! The crate covers the whole pipeline: record I/O and a synthetic corpus
//! generator ([`ecg_io`]), preprocessing ([`signal`]), P-QRS-T delineation
//! ([`delineator`]), rule-driven attention weights ([`attention`]), a small
//! reverse-mode neural-network engine ([`nn`]), the enhancer/classifier
//! networks ([`models`]), the three-stage training regimen ([`training`]) and
//! binary detection metrics ([`evaluation`]).

pub mod attention;
pub mod delineator;
pub mod ecg_io;
pub mod error;
pub mod evaluation;
pub mod fiducial;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
