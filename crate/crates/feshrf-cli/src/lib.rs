//! Library half of the `feshrf` command-line tool: configuration parsing,
//! CSV/JSON I/O and the five subcommand implementations. The binary in
//! `main.rs` is a thin dispatcher around [`commands`].

// `!(x > 0.0)` guards reject NaN (parseable from CSV/flags) along with the
// wrong sign; clippy's suggested `x <= 0.0` would accept NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod data;
pub mod report;

use thiserror::Error;

/// Process-level failure categories; each maps to a fixed exit code.
#[derive(Debug, Error)]
pub enum AppError {
    /// Malformed input: config, CSV schema, flags. Exit 1.
    #[error("{0}")]
    Input(String),
    /// A fit or validation check failed. Exit 2.
    #[error("{0}")]
    CheckFailure(String),
    /// A numerical evaluation failed. Exit 3.
    #[error("{0}")]
    Numerical(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Input(_) => 1,
            AppError::CheckFailure(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        AppError::Input(msg.into())
    }
}

/// Core errors keep their numerical/domain split across the CLI boundary.
impl From<feshrf_core::Error> for AppError {
    fn from(e: feshrf_core::Error) -> Self {
        use feshrf_core::Error::*;
        match &e {
            QuadratureNonConvergence { .. } => AppError::Numerical(e.to_string()),
            AtGridIndex { .. } => AppError::Numerical(e.to_string()),
            _ => AppError::Input(e.to_string()),
        }
    }
}
