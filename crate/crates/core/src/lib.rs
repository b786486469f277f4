//! Covariance-based alignment for cross-subject EEG transfer learning.
//!
//! The crate covers the whole offline decoding chain: band-pass filtering and
//! re-referencing, Euclidean and label alignment of trials, CSP spatial
//! filtering with log-variance features, CORAL on feature vectors, a weighted
//! LDA classifier, a leave-one-subject-out harness and a synthetic
//! multi-subject generator.

pub mod alignment;
pub mod cli;
pub mod container;
pub mod decoding;
pub mod error;
pub mod matrix_json;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod spd;
pub mod synth;

pub use error::{Error, Result};
pub use model::{pair_classes, validate_domain, ClassId, ClassPairing, DomainSet, Trial};
pub use spd::{MeanEstimator, SpdMatrix};
