//! The Minecart resource-collection problem.
//!
//! Geometry lives in the unit square. The base is a quarter disc at the
//! origin corner; mines are discs. Every frame the cart advances by its
//! speed along its heading. Ore is sold automatically when the cart re-enters
//! the base, which also ends the episode. Only mining is stochastic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Environment, Step};
use crate::error::{MorlError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinecartAction {
    Accelerate = 0,
    Brake = 1,
    TurnLeft = 2,
    TurnRight = 3,
    Mine = 4,
    DoNothing = 5,
}

impl MinecartAction {
    pub const COUNT: usize = 6;
    pub const ALL: [MinecartAction; 6] = [
        MinecartAction::Accelerate,
        MinecartAction::Brake,
        MinecartAction::TurnLeft,
        MinecartAction::TurnRight,
        MinecartAction::Mine,
        MinecartAction::DoNothing,
    ];
}

impl TryFrom<usize> for MinecartAction {
    type Error = MorlError;

    fn try_from(a: usize) -> Result<Self> {
        MinecartAction::ALL
            .get(a)
            .copied()
            .ok_or(MorlError::InvalidAction { action: a, count: Self::COUNT })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mine {
    pub position: [f64; 2],
    pub ore_means: Vec<f64>,
}

/// How mined amounts are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OreSampling {
    /// Normal(mean, std) clipped at zero.
    #[default]
    Stochastic,
    /// Distribution means; used for low-variance evaluation and the oracle.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinecartConfig {
    pub capacity: f64,
    pub acceleration: f64,
    pub rotation_deg: f64,
    pub idle_cost: f64,
    pub mining_cost: f64,
    pub accel_cost: f64,
    pub max_speed: f64,
    /// Speed multiplier applied by one brake frame.
    pub brake_factor: f64,
    pub base_radius: f64,
    pub mine_radius: f64,
    pub start_position: [f64; 2],
    pub start_heading_deg: f64,
    pub ore_std: f64,
    pub max_episode_steps: usize,
    pub ore_sampling: OreSampling,
    pub mines: Vec<Mine>,
}

impl Default for MinecartConfig {
    fn default() -> Self {
        let means = [[0.2, 0.0], [0.15, 0.1], [0.2, 0.2], [0.1, 0.15], [0.0, 0.2]];
        let mines = means
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let angle = (5.0 + 20.0 * i as f64).to_radians();
                Mine {
                    position: [0.9 * angle.cos(), 0.9 * angle.sin()],
                    ore_means: m.to_vec(),
                }
            })
            .collect();
        MinecartConfig {
            capacity: 1.5,
            acceleration: 0.0075,
            rotation_deg: 10.0,
            idle_cost: -0.005,
            mining_cost: -0.05,
            accel_cost: -0.025,
            max_speed: 0.05,
            brake_factor: 0.5,
            base_radius: 0.15,
            mine_radius: 0.05,
            start_position: [0.0, 0.0],
            start_heading_deg: 45.0,
            ore_std: 0.05,
            max_episode_steps: 1000,
            ore_sampling: OreSampling::Stochastic,
            mines,
        }
    }
}

impl MinecartConfig {
    pub fn ore_count(&self) -> usize {
        self.mines.first().map_or(0, |m| m.ore_means.len())
    }

    pub fn validate(&self) -> Result<()> {
        let costs = [
            ("idle_cost", self.idle_cost),
            ("mining_cost", self.mining_cost),
            ("accel_cost", self.accel_cost),
        ];
        for (key, c) in costs {
            if !(c <= 0.0) {
                return Err(MorlError::config(key, "fuel costs must be <= 0"));
            }
        }
        if self.mines.is_empty() {
            return Err(MorlError::config("mines", "at least one mine is required"));
        }
        let ores = self.ore_count();
        if ores == 0 {
            return Err(MorlError::config("mines.ore_means", "at least one ore is required"));
        }
        for m in &self.mines {
            if m.ore_means.len() != ores {
                return Err(MorlError::config("mines.ore_means", "all mines need the same ore count"));
            }
            if m.ore_means.iter().any(|&x| !(x >= 0.0)) {
                return Err(MorlError::config("mines.ore_means", "ore means must be >= 0"));
            }
        }
        let positive = [
            ("capacity", self.capacity),
            ("max_speed", self.max_speed),
            ("base_radius", self.base_radius),
            ("mine_radius", self.mine_radius),
        ];
        for (key, v) in positive {
            if !(v > 0.0) {
                return Err(MorlError::config(key, "must be > 0"));
            }
        }
        if !(self.ore_std >= 0.0) {
            return Err(MorlError::config("ore_std", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.brake_factor) {
            return Err(MorlError::config("brake_factor", "must lie in [0, 1]"));
        }
        if self.max_episode_steps == 0 {
            return Err(MorlError::config("max_episode_steps", "must be >= 1"));
        }
        Ok(())
    }

    pub fn num_objectives(&self) -> usize {
        self.ore_count() + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinecartState {
    pub position: [f64; 2],
    pub speed: f64,
    pub heading_deg: f64,
    pub content: Vec<f64>,
    pub step_count: usize,
    /// Set once the cart has been outside the base.
    pub departed: bool,
}

impl MinecartState {
    pub fn in_base(&self, config: &MinecartConfig) -> bool {
        norm(self.position) <= config.base_radius
    }

    /// Index of the mine the cart overlaps, if any.
    pub fn overlapping_mine(&self, config: &MinecartConfig) -> Option<usize> {
        config.mines.iter().position(|m| {
            norm([self.position[0] - m.position[0], self.position[1] - m.position[1]]) <= config.mine_radius
        })
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

pub fn minecart_reset(config: &MinecartConfig) -> MinecartState {
    MinecartState {
        position: config.start_position,
        speed: 0.0,
        heading_deg: config.start_heading_deg,
        content: vec![0.0; config.ore_count()],
        step_count: 0,
        departed: false,
    }
}

/// Advances one frame. Returns the reward `(sold ore.., fuel)`, whether the
/// cart returned to base, and whether the step limit was hit.
pub fn minecart_step<R: rand::Rng + ?Sized>(
    state: &mut MinecartState,
    action: MinecartAction,
    config: &MinecartConfig,
    rng: &mut R,
) -> (Vec<f64>, bool, bool) {
    let ores = config.ore_count();
    let mut reward = vec![0.0; ores + 1];
    let mut fuel = config.idle_cost;
    match action {
        MinecartAction::Accelerate => {
            state.speed = (state.speed + config.acceleration).min(config.max_speed);
            fuel += config.accel_cost;
        }
        MinecartAction::Brake => state.speed *= config.brake_factor,
        MinecartAction::TurnLeft => {
            state.heading_deg = (state.heading_deg + config.rotation_deg).rem_euclid(360.0)
        }
        MinecartAction::TurnRight => {
            state.heading_deg = (state.heading_deg - config.rotation_deg).rem_euclid(360.0)
        }
        MinecartAction::Mine => {
            fuel += config.mining_cost;
            if let Some(m) = state.overlapping_mine(config) {
                mine_ore(state, &config.mines[m], config, rng);
            }
        }
        MinecartAction::DoNothing => {}
    }
    reward[ores] = fuel;

    let h = state.heading_deg.to_radians();
    state.position[0] = (state.position[0] + state.speed * h.cos()).clamp(0.0, 1.0);
    state.position[1] = (state.position[1] + state.speed * h.sin()).clamp(0.0, 1.0);
    state.step_count += 1;

    let mut terminal = false;
    if state.in_base(config) {
        if state.departed {
            reward[..ores].copy_from_slice(&state.content);
            state.content.iter_mut().for_each(|c| *c = 0.0);
            terminal = true;
        }
    } else {
        state.departed = true;
    }
    let truncated = !terminal && state.step_count >= config.max_episode_steps;
    (reward, terminal, truncated)
}

fn mine_ore<R: rand::Rng + ?Sized>(state: &mut MinecartState, mine: &Mine, config: &MinecartConfig, rng: &mut R) {
    let mut drawn: Vec<f64> = match config.ore_sampling {
        OreSampling::Mean => mine.ore_means.clone(),
        OreSampling::Stochastic => mine
            .ore_means
            .iter()
            .map(|&mean| match Normal::new(mean, config.ore_std) {
                Ok(d) => d.sample(rng).max(0.0),
                Err(_) => mean,
            })
            .collect(),
    };
    let held: f64 = state.content.iter().sum();
    let room = (config.capacity - held).max(0.0);
    let total: f64 = drawn.iter().sum();
    if total > room {
        let scale = if total > 0.0 { room / total } else { 0.0 };
        drawn.iter_mut().for_each(|d| *d *= scale);
    }
    for (c, d) in state.content.iter_mut().zip(drawn) {
        *c += d;
    }
}

/// Feature observation: position, normalized speed, heading sine/cosine and
/// content relative to capacity.
pub fn minecart_features(state: &MinecartState, config: &MinecartConfig) -> Vec<f64> {
    let h = state.heading_deg.to_radians();
    let mut f = Vec::with_capacity(5 + state.content.len());
    f.extend_from_slice(&state.position);
    f.push(state.speed / config.max_speed);
    f.push(h.sin());
    f.push(h.cos());
    f.extend(state.content.iter().map(|c| c / config.capacity));
    f
}

/// Minecart environment with its own seeded RNG stream.
#[derive(Clone, Debug)]
pub struct Minecart {
    config: MinecartConfig,
    state: MinecartState,
    rng: ChaCha8Rng,
}

impl Minecart {
    pub fn new(config: MinecartConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let state = minecart_reset(&config);
        Ok(Minecart {
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &MinecartConfig {
        &self.config
    }

    pub fn state(&self) -> &MinecartState {
        &self.state
    }

    pub fn set_state(&mut self, state: MinecartState) {
        self.state = state;
    }
}

impl Environment for Minecart {
    fn num_actions(&self) -> usize {
        MinecartAction::COUNT
    }

    fn num_objectives(&self) -> usize {
        self.config.num_objectives()
    }

    fn observation_len(&self) -> usize {
        5 + self.config.ore_count()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = minecart_reset(&self.config);
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let action = MinecartAction::try_from(action)?;
        let (reward, terminal, truncated) = minecart_step(&mut self.state, action, &self.config, &mut self.rng);
        Ok(Step {
            observation: self.observation(),
            reward,
            terminal,
            truncated,
        })
    }

    fn observation(&self) -> Vec<f64> {
        minecart_features(&self.state, &self.config)
    }
}
