//! Simulator for Byzantine-resilient federated learning with a
//! Nesterov-accelerated server.

pub mod aggregate;
pub mod attack;
pub mod cli;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod vector;
pub mod verify;

pub use error::{Error, Result};
pub use vector::GradVector;
