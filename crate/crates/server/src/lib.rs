//! Streaming server and headless reference client for the thermocloud
//! particle field.
//!
//! The server recomputes the field on a fixed tick, publishes immutable
//! snapshots, and runs one acknowledged protocol session per connection,
//! over plain TCP or as binary websocket messages on `/stream`.

pub mod client;
pub mod config;
pub mod engine;
pub mod net;
pub mod runtime;
pub mod session;

use thiserror::Error;

pub use config::ServerConfig;
pub use engine::{Engine, FieldSnapshot};
pub use runtime::{start, RunningServer};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] thermocloud_core::field::FieldError),
    #[error(transparent)]
    Segmentation(#[from] thermocloud_core::segmentation::SegmentationError),
    #[error(transparent)]
    Lod(#[from] thermocloud_core::lod::LodError),
    #[error(transparent)]
    Ingest(#[from] thermocloud_core::ingest::IngestError),
    #[error(transparent)]
    Encode(#[from] thermocloud_core::protocol::EncodeError),
    #[error("level: {0}")]
    Level(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
