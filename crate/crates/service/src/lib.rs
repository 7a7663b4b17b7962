//! HTTP service, conversation store and command-line entry points.

pub mod api;
pub mod cli;
pub mod store;
