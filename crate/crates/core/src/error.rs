// SPDX-License-Identifier: Apache-2.0

use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric input error: {0}")]
    NumericInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("shape error: expected length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("index error: position {position} out of range for length {len}")]
    Index { position: usize, len: usize },
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(expected: usize, actual: usize) -> Self {
        Error::Shape { expected, actual }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// by a failure inside the pipeline.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Index { .. }
                | Error::Fixture(_)
                | Error::Training(_)
                | Error::Input(_)
                | Error::Format(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
