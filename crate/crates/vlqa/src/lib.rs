//! HTTP service and command line for video library question answering.

pub mod api;
pub mod cli;
pub mod config;
pub mod server;
