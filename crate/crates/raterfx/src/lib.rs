//! IO, file formats, and pipeline orchestration around `raterfx-core`.
//!
//! The core crate is `no_std` and pure; everything that touches files lives
//! here: CSV ingestion and export, id-keyed JSON forms of fit results,
//! atomic artifact writing with a hashed manifest, and the report pipeline
//! the CLI drives.

pub mod artifacts;
pub mod cli;
pub mod csv_io;
pub mod fit_io;
pub mod pipeline;

pub use raterfx_core as core;
