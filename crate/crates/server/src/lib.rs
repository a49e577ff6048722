//! HTTP service and command-line front end over `haptic_core`.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod http;
pub mod render;

pub use engine::{Engine, EngineParts};
pub use error::{ApiError, ErrorCode};
