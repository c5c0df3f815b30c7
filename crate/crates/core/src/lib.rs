//! Evaluation and training-data toolkit for fine-grained dense retrieval.
//!
//! The modules follow the pipeline: load a fully annotated dataset
//! ([`corpus`]), produce ranked runs with an embedding model ([`embedding`],
//! [`retrieval`]) or BM25 ([`lexical`]), score them with graded nDCG
//! ([`metrics`]), inspect failures ([`analysis`]) and synthesize training
//! queries ([`datagen`]).

pub mod analysis;
pub mod corpus;
pub mod datagen;
pub mod embedding;
pub mod error;
mod http;
pub mod lexical;
pub mod metrics;
pub mod retrieval;
pub mod text;

pub use error::{Error, Result};
