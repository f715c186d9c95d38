//! File formats, RGB-D ingestion and the command line for `pointvote-core`.

pub mod cli;
pub mod config;
pub mod dataset_file;
pub mod error;
pub mod formats;
pub mod images;
pub mod ply;
pub mod scene_io;
pub mod weights_file;

pub use error::{Error, Result};
