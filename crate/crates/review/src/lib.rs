//! Review service: serves sampled profiles to annotators and records their
//! pass/fail judgments in a crash-safe journal.

mod server;
mod store;

use std::path::PathBuf;

use thiserror::Error;

pub use server::{router, serve, AppState, ServeConfig};
pub use store::{ReviewStore, SubmitError};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: corrupt journal line: {message}")]
    Journal {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] toolde_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
