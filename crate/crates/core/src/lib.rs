//! Row-column-addressed (RCA) array 3-D imaging with ghost-echo correlation
//! post-filtering.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`forward_model`] simulates RF channel data in which every
//!    transmit/receive pair sees the main echo plus eight edge-wave echoes;
//! 2. [`beamformer`] demodulates to baseband and beamforms one frame per
//!    echo path (the main frame and eight ghost frames);
//! 3. [`postfilter`] correlates the main frame with each ghost frame and
//!    weights the main frame by the combined correlation magnitude;
//! 4. [`metrics`] measures resolution, ghost suppression and contrast.
//!
//! [`pipeline`] chains the stages through on-disk artifacts.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamformer;
pub mod config;
pub mod error;
pub mod forward_model;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod postfilter;

pub use error::{Error, Result};
