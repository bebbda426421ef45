//! Writing-style development analysis toolkit.
//!
//! Learns a pairwise writing-style similarity function over a text corpus,
//! builds per-author development profiles over time, clusters the
//! variable-length profiles with a prefix-distance k-means, and reports
//! writing-quality indicators and cross-author similarity structure.

pub mod analysis;
pub mod clustering;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod profiles;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
