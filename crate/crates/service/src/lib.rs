//! Command line and HTTP front ends over the `makeitso` engine. Both paths
//! call [`results::run_invert`], so a CLI run and an API job with the same
//! config and seed write identical latents and checkpoints.

pub mod api;
pub mod cli;
pub mod error;
pub mod images;
pub mod results;

pub use error::{Result, ServiceError};
