//! Std companion to `emlab-core`: corpus files, configuration, the search
//! orchestrator, reports and plots.

pub mod config;
pub mod corpus_io;
pub mod error;
pub mod plot;
pub mod report;
pub mod search;

pub use error::{Error, Result};
