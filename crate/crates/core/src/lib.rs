//! Multi-channel face/body pain classification from video.
//!
//! Frames are cropped into face and body regions, passed through two frozen
//! VGG16-style feature extractors, fused by a small trainable head into a
//! 720-dimensional vector per frame, and classified over time by a two-layer
//! LSTM. Everything needed to verify the pipeline at desk scale lives here:
//! exact parameter accounting, finite-difference gradient checks, a
//! deterministic synthetic dataset and leave-one-subject-out evaluation.

pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod temporal;

pub use error::{Error, ErrorKind, Result};
