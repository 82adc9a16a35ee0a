//! Streaming self-supervised multi-actor predictive learning.

pub mod assignment;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod infer_eval;
pub mod ingest;
pub mod learn;
pub mod numerics;
pub mod predictor;
pub mod temporal;

pub use config::{Config, KMode};
pub use error::{Error, Result};
