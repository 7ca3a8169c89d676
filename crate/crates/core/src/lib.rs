//! Static analysis of crypto-API usage in Java sources.
//!
//! The pipeline runs extraction ([`ingest`]), complexity scoring
//! ([`complexity`]), value resolution ([`resolve`]), taxonomy labelling
//! ([`classify`]) and misuse rules ([`rules`]). [`bench`] generates and grades
//! the benchmark corpus, and [`report`] ties it together.

pub mod bench;
pub mod classify;
pub mod complexity;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod report;
pub mod resolve;
pub mod rules;
pub mod syntax;

pub use error::{Error, Result};
pub use exec::Execution;
