//! Noise-space GAN inversion: jointly optimize a noise vector and the
//! synthesis network of a style-based generator, regularized by experience
//! replay against an EMA-anchored reference model.

pub mod baselines;
pub mod editing;
pub mod error;
pub mod generator;
pub mod harness;
pub mod inversion;
mod kernels;
pub mod objectives;
pub mod optim;

pub use error::{Error, Result};
