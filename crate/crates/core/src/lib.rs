//! Multi-objective reinforcement learning under dynamically changing
//! objective weights.

pub mod agents;
pub mod env;
pub mod error;
pub mod momath;
pub mod net;
pub mod oracle;
pub mod replay;
pub mod runner;
pub mod schedule;

pub use error::{MorlError, Result};
pub use momath::{ReturnVector, RewardVector, ValueVector, WeightVector};
