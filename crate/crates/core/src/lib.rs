//! Grounded poverty-of-stimulus laboratory.
//!
//! Generates image–caption data that is ambiguous between hierarchical and
//! linear subject–verb agreement, trains tiny vision-conditioned caption
//! models with controlled amounts of disambiguating evidence, and measures
//! which rule they prefer on held-out minimal pairs.

pub mod artgen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod grammar;
pub mod image;
pub mod ingest;
pub mod model;
pub mod protocol;
pub mod report;
pub mod splits;
pub mod vocab;
pub mod workspace;

pub use error::{Error, Result};
pub use exec::Exec;
