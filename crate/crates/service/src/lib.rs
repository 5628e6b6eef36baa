//! REST service, headless CLI and stub generation server for the previz engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod stub;

pub use api::{router, AppState};
pub use config::Config;
pub use engine::Engine;
pub use error::{ApiError, ErrorCode};
