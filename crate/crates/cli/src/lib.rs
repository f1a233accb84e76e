//! Command-line front end and HTTP service for the assessment engine.

pub mod api;
pub mod commands;
pub mod settings;
pub mod store;
