//! Weight-change scenarios.
//!
//! Every emitted weight is a pure function of the seed and the step (sparse)
//! or episode (regular) index: the k-th random target is drawn from its own
//! ChaCha stream, so schedules can be queried in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::env::EnvKind;
use crate::error::{MorlError, Result};
use crate::momath::WeightVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Resampled every `period` agent steps.
    Sparse,
    /// Linear moves between random targets, one leg every `episodes` episodes.
    Regular,
    Fixed,
}

/// `[schedule]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: ScheduleMode,
    /// Sparse period in agent steps; defaults to 50 000 (Minecart) or 5 000 (DST).
    pub period: Option<u64>,
    /// Episodes per regular leg.
    pub episodes: u64,
    /// Weight of the fixed mode; defaults to uniform.
    pub weight: Option<Vec<f64>>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            mode: ScheduleMode::Sparse,
            period: None,
            episodes: 10,
            weight: None,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self, env: EnvKind, num_objectives: usize, seed: u64) -> Result<WeightSchedule> {
        let period = self.period.unwrap_or(match env {
            EnvKind::Minecart => 50_000,
            EnvKind::Dst => 5_000,
        });
        match self.mode {
            ScheduleMode::Sparse if period == 0 => return Err(MorlError::config("schedule.period", "must be >= 1")),
            ScheduleMode::Regular if self.episodes == 0 => {
                return Err(MorlError::config("schedule.episodes", "must be >= 1"))
            }
            _ => {}
        }
        let fixed = match &self.weight {
            Some(w) => {
                if w.len() != num_objectives {
                    return Err(MorlError::config(
                        "schedule.weight",
                        format!("expected {num_objectives} components, got {}", w.len()),
                    ));
                }
                WeightVector::new(w.clone()).map_err(|e| MorlError::config("schedule.weight", e.to_string()))?
            }
            None => WeightVector::uniform(num_objectives),
        };
        Ok(WeightSchedule {
            mode: self.mode,
            period,
            episodes: self.episodes,
            num_objectives,
            seed,
            fixed,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSchedule {
    mode: ScheduleMode,
    period: u64,
    episodes: u64,
    num_objectives: usize,
    seed: u64,
    fixed: WeightVector,
}

/// Draw from Dirichlet(1, ..., 1): normalized unit exponentials.
pub fn dirichlet_ones<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> WeightVector {
    loop {
        let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        if let Ok(w) = WeightVector::normalized(draws) {
            return w;
        }
    }
}

/// `(1 - frac) from + frac to`, projected back onto the simplex.
pub fn interpolate(from: &WeightVector, to: &WeightVector, frac: f64) -> WeightVector {
    let v: Vec<f64> = from.iter().zip(to.iter()).map(|(a, b)| (1.0 - frac) * a + frac * b).collect();
    WeightVector::normalized(v).expect("convex combination of simplex points")
}

impl WeightSchedule {
    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// The k-th random target.
    pub fn target(&self, k: u64) -> WeightVector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        dirichlet_ones(self.num_objectives, &mut rng)
    }

    pub fn sparse_weight(&self, step: u64) -> WeightVector {
        self.target(step / self.period)
    }

    pub fn regular_weight(&self, episode: u64) -> WeightVector {
        let leg = episode / self.episodes;
        let within = episode % self.episodes;
        if within == 0 {
            return self.target(leg);
        }
        interpolate(&self.target(leg), &self.target(leg + 1), within as f64 / self.episodes as f64)
    }

    /// Active weight at a given agent step within a given episode.
    pub fn weight(&self, step: u64, episode: u64) -> WeightVector {
        match self.mode {
            ScheduleMode::Sparse => self.sparse_weight(step),
            ScheduleMode::Regular => self.regular_weight(episode),
            ScheduleMode::Fixed => self.fixed.clone(),
        }
    }
}
