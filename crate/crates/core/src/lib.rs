//! Query-aware flow diffusion: local graph retrieval driven by a nonnegative
//! dual quadratic program whose edge weights depend on the query.

pub mod diffusion;
pub mod embeddings;
pub mod error;
pub mod graph;
pub mod instances;
pub mod oracle;
pub mod retrieval;
pub mod seeding;
pub mod synth;
pub mod weighting;

pub use error::{Error, Result};
