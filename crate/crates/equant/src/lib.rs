//! File formats, training workflow and command-line plumbing around
//! [`equant_core`].

pub mod attn_dump;
pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod glove;
pub mod io;
pub mod report;
pub mod runlog;
pub mod squad;
pub mod workflow;

pub use equant_core as core;
pub use error::{Error, Result};
