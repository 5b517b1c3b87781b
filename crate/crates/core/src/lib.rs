//! Camera pose auto-encoders at desk scale: synthetic scenes, a teacher
//! absolute pose regressor, a pose auto-encoder distilled from it, an image
//! decoder and a Siamese relative regressor, plus the test-time refinement
//! procedures built on the learned pose encodings.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod fourier;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod pose;
pub mod refine;
pub mod report;
pub mod rng;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
