//! Benchmark environments: Minecart and Deep Sea Treasure, plus the
//! frame-skip and pixel-observation wrappers.

pub mod config;
pub mod dst;
pub mod frame_skip;
pub mod minecart;
pub mod render;

pub use config::{EnvConfig, EnvKind, ObservationMode};
pub use dst::{Cell, DeepSeaTreasure, DstAction, DstMap, DstState};
pub use frame_skip::FrameSkip;
pub use minecart::{Mine, Minecart, MinecartAction, MinecartConfig, MinecartState, OreSampling};
pub use render::PixelObservation;

use crate::error::Result;

/// Outcome of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: Vec<f64>,
    /// The episode reached a true terminal state (no bootstrapping past it).
    pub terminal: bool,
    /// The episode was cut off by the step limit.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// An episodic multi-objective environment owning its state and RNG stream.
pub trait Environment: Send {
    fn num_actions(&self) -> usize;
    fn num_objectives(&self) -> usize;
    fn observation_len(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<Step>;
    fn observation(&self) -> Vec<f64>;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn num_objectives(&self) -> usize {
        (**self).num_objectives()
    }
    fn observation_len(&self) -> usize {
        (**self).observation_len()
    }
    fn reset(&mut self) -> Vec<f64> {
        (**self).reset()
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        (**self).step(action)
    }
    fn observation(&self) -> Vec<f64> {
        (**self).observation()
    }
}
