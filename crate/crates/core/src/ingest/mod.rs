//! Reading sources: recorded CSV logs and a seeded synthetic generator.
//!
//! Both produce [`ReadingBatch`]es with strictly increasing ticks. Pacing is
//! left to the consumer: each batch carries the delay that should precede
//! it.

mod replay;
mod synthetic;

use std::time::Duration;

use thiserror::Error;

use crate::field::Readings;

pub use replay::{CsvReplay, DEFAULT_CHANNEL};
pub use synthetic::{SyntheticParams, SyntheticStream};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("no readings in input")]
    Empty,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Sensor readings that arrived together.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadingBatch {
    pub tick: u64,
    /// Source timestamp in milliseconds.
    pub timestamp_ms: u64,
    pub readings: Readings,
}

/// A batch and how long to wait before applying it.
#[derive(Debug, Clone, PartialEq)]
pub struct Paced {
    pub delay: Duration,
    pub batch: ReadingBatch,
}
