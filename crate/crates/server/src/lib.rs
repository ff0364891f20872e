//! HTTP service for the culture learning suite.
//!
//! Every mutation goes through [`app::Inner::commit`], which writes the
//! change list to SQLite in one transaction before applying it in memory.

pub mod api;
pub mod app;
pub mod auth;
pub mod clock;
pub mod config;
pub mod db;
pub mod error;
pub mod model;
pub mod pipeline;

pub use api::router;
pub use app::{App, AppOptions};
