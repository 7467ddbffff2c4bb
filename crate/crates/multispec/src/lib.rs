//! File formats, configuration and the batch pipeline around
//! `multispec-core`.
//!
//! The binary `multispec` drives everything from a config file; the library
//! exposes the same steps for tests and embedding.

mod codec;
pub mod ascf;
pub mod checkpoint;
pub mod config;
mod error;
pub mod manifest;
pub mod patches;
pub mod pipeline;
pub mod report;
pub mod wav;

pub use error::{Error, Result};
