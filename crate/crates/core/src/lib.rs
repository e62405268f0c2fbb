//! Multilingual factual-knowledge tracing: cloze query generation, match
//! evaluation, corpus tracing, fact classification and neuron analysis over
//! externally produced model outputs.

pub mod classify;
pub mod error;
pub mod fmt;
pub mod matching;
pub mod model;
pub mod neurons;
pub mod par;
pub mod pipeline;
pub mod prompt;
pub mod report;
pub mod similarity;
pub mod stats;
pub mod text;
pub mod tracer;

pub use error::{Error, Result};
