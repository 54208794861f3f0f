//! Cross-modal autoencoder for zero-shot video/text retrieval.

pub mod cli;
pub mod config;
pub mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod mapper;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod optim;

pub use error::{Error, Result};
