//! Hierarchical latent world-model agents (tracker and puppeteer) on a 2D
//! puppet terrain suite.

pub mod agents;
pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod metrics;
pub mod numeric;
pub mod planner;
pub mod world_model;

pub use error::{Error, Result};
