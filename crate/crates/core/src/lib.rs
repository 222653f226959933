//! Lifelong knowledge editing without touching model weights.
//!
//! Edited facts live in an append-only [`memory`]. For each query the most
//! similar facts are [`retrieval`]-ed, a learned [`selector`] keeps the ones
//! relevant to the query, and [`decoding`] answers with those facts in
//! context while penalizing first tokens the unedited model already
//! preferred. Queries with no relevant fact go to the unedited model
//! untouched. [`eval`] runs sequential editing benchmarks over the whole
//! pipeline; [`synth`] generates suites for the deterministic toy model in
//! [`lm`].

pub mod decoding;
pub mod error;
pub mod eval;
#[cfg(feature = "remote")]
mod http;
pub mod lm;
pub mod memory;
pub mod retrieval;
pub mod selector;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
#[cfg(feature = "remote")]
pub use http::HttpConfig;
