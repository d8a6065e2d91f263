//! The `stemsim` command-line tool and HTTP service.

pub mod api;
pub mod cli;
pub mod error;
pub mod http;
pub mod settings;

pub use error::{AppError, AppResult, ErrorBody};
