//! Experience storage: a trajectory-atomic FIFO buffer, an optional diverse
//! buffer that retains whole trajectories chosen by crowding distance, and
//! proportional prioritized sampling over both.
//!
//! Capacities are counted in transitions. With the diverse buffer enabled the
//! total capacity is split evenly between the two parts. Sampling treats both
//! parts as one pool with mass `(delta + eps)^alpha` per transition.

mod sum_tree;

pub use sum_tree::SumTree;

use std::collections::VecDeque;
use std::io::Write;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};
use crate::momath::crowding_distance;

/// One `(s, a, r, s')` experience.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: Vec<f64>,
    pub next_observation: Vec<f64>,
    /// True terminal: targets do not bootstrap past it.
    pub terminal: bool,
    /// Last transition of its episode (terminal or cut off by a step limit).
    pub episode_end: bool,
    /// Assigned by the buffer on insertion.
    pub trajectory: u64,
}

/// A complete episode, moved between buffer parts as a unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    pub transitions: Vec<Transition>,
    /// Priority input `delta` of each transition.
    pub priorities: Vec<f64>,
    pub signature: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Discounted return of `rewards` counted from the first one.
pub fn signature<'a, I>(rewards: I, gamma: f64) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out: Vec<f64> = Vec::new();
    let mut discount = 1.0;
    for r in rewards {
        if out.is_empty() {
            out = vec![0.0; r.len()];
        }
        for (o, x) in out.iter_mut().zip(r) {
            *o += discount * x;
        }
        discount *= gamma;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    /// Total capacity in transitions.
    pub capacity: usize,
    /// Enables the diverse buffer, which then takes half of `capacity`.
    pub diverse: bool,
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            capacity: 10_000,
            diverse: false,
            alpha: 2.0,
            epsilon: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Stored {
    id: u64,
    slots: Vec<usize>,
    signature: Vec<f64>,
    discount: f64,
    complete: bool,
}

/// What happened to the trajectory pushed out of the FIFO buffer, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct Eviction {
    pub trajectory: u64,
    pub len: usize,
    /// `Some(accepted)` when the diverse buffer considered it.
    pub diverse_accepted: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    gamma: f64,
    alpha: f64,
    epsilon: f64,
    fifo_capacity: usize,
    diverse_capacity: usize,
    slots: Vec<Option<Transition>>,
    delta: Vec<f64>,
    tree: SumTree,
    delta_max: SumTree,
    free: Vec<usize>,
    fifo: VecDeque<Stored>,
    fifo_len: usize,
    diverse: Vec<Stored>,
    diverse_len: usize,
    next_id: u64,
}

impl ReplayBuffer {
    /// `gamma` discounts trajectory signatures.
    pub fn new(config: &ReplayConfig, gamma: f64) -> Result<Self> {
        if config.capacity == 0 {
            return Err(MorlError::config("replay.capacity", "must be >= 1"));
        }
        if config.diverse && config.capacity < 2 {
            return Err(MorlError::config("replay.capacity", "diverse replay needs capacity >= 2"));
        }
        if !(config.epsilon > 0.0) || !(config.alpha >= 0.0) {
            return Err(MorlError::config("replay.epsilon", "epsilon must be > 0 and alpha >= 0"));
        }
        let (fifo_capacity, diverse_capacity) = if config.diverse {
            (config.capacity - config.capacity / 2, config.capacity / 2)
        } else {
            (config.capacity, 0)
        };
        Ok(Self::with_capacities(fifo_capacity, diverse_capacity, config.alpha, config.epsilon, gamma))
    }

    pub fn with_capacities(fifo: usize, diverse: usize, alpha: f64, epsilon: f64, gamma: f64) -> Self {
        let total = fifo + diverse;
        ReplayBuffer {
            gamma,
            alpha,
            epsilon,
            fifo_capacity: fifo,
            diverse_capacity: diverse,
            slots: vec![None; total],
            delta: vec![0.0; total],
            tree: SumTree::new(total),
            delta_max: SumTree::new(total),
            free: (0..total).rev().collect(),
            fifo: VecDeque::new(),
            fifo_len: 0,
            diverse: Vec::new(),
            diverse_len: 0,
            next_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.fifo_len + self.diverse_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fifo_len(&self) -> usize {
        self.fifo_len
    }

    pub fn diverse_len(&self) -> usize {
        self.diverse_len
    }

    pub fn fifo_capacity(&self) -> usize {
        self.fifo_capacity
    }

    pub fn diverse_capacity(&self) -> usize {
        self.diverse_capacity
    }

    pub fn has_diverse(&self) -> bool {
        self.diverse_capacity > 0
    }

    fn mass(&self, delta: f64) -> f64 {
        (delta + self.epsilon).powf(self.alpha)
    }

    fn occupy(&mut self, transition: Transition, delta: f64) -> usize {
        let slot = self.free.pop().expect("slot accounting keeps a free slot available");
        self.slots[slot] = Some(transition);
        self.set_delta(slot, delta);
        slot
    }

    fn release(&mut self, slot: usize) -> (Transition, f64) {
        let t = self.slots[slot].take().expect("released slot is occupied");
        let d = self.delta[slot];
        self.delta[slot] = 0.0;
        self.tree.set(slot, 0.0);
        self.delta_max.set(slot, 0.0);
        self.free.push(slot);
        (t, d)
    }

    fn set_delta(&mut self, slot: usize, delta: f64) {
        self.delta[slot] = delta;
        self.tree.set(slot, self.mass(delta));
        self.delta_max.set(slot, delta);
    }

    /// Appends a transition to the FIFO buffer. When the buffer is full the
    /// oldest complete trajectory is removed first and, with diverse replay
    /// enabled, offered to the diverse buffer.
    pub fn push(&mut self, mut transition: Transition) -> Option<Eviction> {
        let mut eviction = None;
        if self.fifo_len >= self.fifo_capacity {
            eviction = self.evict_oldest();
        }
        let open = matches!(self.fifo.back(), Some(s) if !s.complete);
        if !open {
            self.fifo.push_back(Stored {
                id: self.next_id,
                slots: Vec::new(),
                signature: vec![0.0; transition.reward.len()],
                discount: 1.0,
                complete: false,
            });
            self.next_id += 1;
        }
        let initial = if self.is_empty() { 1.0 } else { self.delta_max.max() };
        let episode_end = transition.episode_end;
        let reward = transition.reward.clone();
        transition.trajectory = self.fifo.back().expect("open trajectory").id;
        let slot = self.occupy(transition, initial);
        let gamma = self.gamma;
        let back = self.fifo.back_mut().expect("open trajectory");
        back.slots.push(slot);
        for (s, r) in back.signature.iter_mut().zip(&reward) {
            *s += back.discount * r;
        }
        back.discount *= gamma;
        back.complete = episode_end;
        self.fifo_len += 1;
        eviction
    }

    fn evict_oldest(&mut self) -> Option<Eviction> {
        let oldest = self.fifo.front()?;
        if !oldest.complete {
            // a single episode longer than the FIFO buffer: drop its first
            // transition; it can never be stored whole
            let slot = self.fifo.front_mut().expect("non-empty").slots.remove(0);
            self.release(slot);
            self.fifo_len -= 1;
            warn!("episode longer than the FIFO buffer; dropping its oldest transition");
            return None;
        }
        let stored = self.fifo.pop_front().expect("non-empty");
        self.fifo_len -= stored.slots.len();
        let mut transitions = Vec::with_capacity(stored.slots.len());
        let mut priorities = Vec::with_capacity(stored.slots.len());
        for &slot in &stored.slots {
            let (t, d) = self.release(slot);
            transitions.push(t);
            priorities.push(d);
        }
        let trajectory = Trajectory {
            id: stored.id,
            transitions,
            priorities,
            signature: stored.signature,
        };
        let len = trajectory.len();
        let diverse_accepted = self.has_diverse().then(|| self.der_consider(trajectory));
        Some(Eviction {
            trajectory: stored.id,
            len,
            diverse_accepted,
        })
    }

    /// Offers a complete trajectory to the diverse buffer.
    ///
    /// While it does not fit, the stored trajectory with the lowest crowding
    /// distance (computed together with the candidate) is marked for removal;
    /// if the candidate itself is (or ties) the least diverse, it is rejected
    /// and nothing changes. Removals are applied only on acceptance.
    pub fn der_consider(&mut self, trajectory: Trajectory) -> bool {
        let need = trajectory.len();
        if need == 0 {
            return false;
        }
        if need > self.diverse_capacity {
            warn!(
                "trajectory of {need} transitions exceeds the diverse capacity {}; discarded",
                self.diverse_capacity
            );
            return false;
        }
        let mut removed = vec![false; self.diverse.len()];
        let mut free = self.diverse_capacity - self.diverse_len;
        while free < need {
            let kept: Vec<usize> = (0..self.diverse.len()).filter(|&i| !removed[i]).collect();
            let mut signatures: Vec<&[f64]> = kept.iter().map(|&i| self.diverse[i].signature.as_slice()).collect();
            signatures.push(&trajectory.signature);
            let diversity = crowding_distance(&signatures);
            let candidate = diversity[kept.len()];
            let mut min = None;
            for (k, &i) in kept.iter().enumerate() {
                match min {
                    Some((_, d)) if diversity[k] >= d => {}
                    _ => min = Some((i, diversity[k])),
                }
            }
            match min {
                Some((i, d)) if candidate > d => {
                    removed[i] = true;
                    free += self.diverse[i].slots.len();
                }
                _ => return false,
            }
        }
        let mut i = 0;
        self.diverse.retain(|_| {
            let keep = !removed[i];
            i += 1;
            keep
        });
        let removed_slots: Vec<usize> = self.stale_slots();
        for slot in removed_slots {
            self.release(slot);
        }
        self.diverse_len = self.diverse.iter().map(|s| s.slots.len()).sum();
        let Trajectory { id, transitions, priorities, signature } = trajectory;
        let slots = transitions
            .into_iter()
            .zip(priorities)
            .map(|(t, d)| self.occupy(t, d))
            .collect::<Vec<_>>();
        self.diverse_len += slots.len();
        self.diverse.push(Stored {
            id,
            slots,
            signature,
            discount: 1.0,
            complete: true,
        });
        true
    }

    /// Occupied slots no longer referenced by either buffer part.
    fn stale_slots(&self) -> Vec<usize> {
        let mut referenced = vec![false; self.slots.len()];
        for s in self.fifo.iter().chain(&self.diverse) {
            for &slot in &s.slots {
                referenced[slot] = true;
            }
        }
        (0..self.slots.len())
            .filter(|&i| self.slots[i].is_some() && !referenced[i])
            .collect()
    }

    /// Draws `batch_size` slot indices with replacement, proportionally to
    /// `(delta + eps)^alpha`.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(MorlError::EmptyBuffer);
        }
        let total = self.tree.total();
        Ok((0..batch_size)
            .map(|_| self.tree.find(rng.random::<f64>() * total))
            .collect())
    }

    pub fn transition(&self, index: usize) -> Result<&Transition> {
        self.slots
            .get(index)
            .and_then(Option::as_ref)
            .ok_or(MorlError::IndexOutOfRange { index, len: self.slots.len() })
    }

    pub fn priority(&self, index: usize) -> Result<f64> {
        self.transition(index)?;
        Ok(self.delta[index])
    }

    /// Sampling probability of the transition at `index`.
    pub fn probability(&self, index: usize) -> Result<f64> {
        self.transition(index)?;
        Ok(self.tree.get(index) / self.tree.total())
    }

    /// Sets `delta = (|active| + |sampled|) / 2`, or `|active|` when no
    /// second TD error is given.
    pub fn update_priorities(&mut self, indices: &[usize], td_active: &[f64], td_sampled: Option<&[f64]>) -> Result<()> {
        MorlError::check_dim(indices.len(), td_active.len())?;
        if let Some(s) = td_sampled {
            MorlError::check_dim(indices.len(), s.len())?;
        }
        for &i in indices {
            self.transition(i)?;
        }
        for (k, &i) in indices.iter().enumerate() {
            let delta = match td_sampled {
                Some(s) => (td_active[k].abs() + s[k].abs()) / 2.0,
                None => td_active[k].abs(),
            };
            if !delta.is_finite() {
                return Err(MorlError::NonFinite("TD error"));
            }
            self.set_delta(i, delta);
        }
        Ok(())
    }

    /// `(id, length, signature)` of every complete FIFO trajectory.
    pub fn fifo_trajectories(&self) -> Vec<(u64, usize, Vec<f64>)> {
        self.fifo
            .iter()
            .filter(|s| s.complete)
            .map(|s| (s.id, s.slots.len(), s.signature.clone()))
            .collect()
    }

    /// `(id, length, signature)` of every diverse-buffer trajectory.
    pub fn diverse_trajectories(&self) -> Vec<(u64, usize, Vec<f64>)> {
        self.diverse
            .iter()
            .map(|s| (s.id, s.slots.len(), s.signature.clone()))
            .collect()
    }

    /// Full copy of the diverse buffer: trajectories with transitions and
    /// priorities, in storage order.
    pub fn diverse_snapshot(&self) -> Vec<Trajectory> {
        self.diverse
            .iter()
            .map(|s| Trajectory {
                id: s.id,
                transitions: s.slots.iter().map(|&i| self.slots[i].clone().expect("occupied")).collect(),
                priorities: s.slots.iter().map(|&i| self.delta[i]).collect(),
                signature: s.signature.clone(),
            })
            .collect()
    }

    /// Checks the bookkeeping invariants: capacities, trajectory atomicity
    /// and contiguity, and slot ownership. Intended for tests.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.fifo_len > self.fifo_capacity {
            return Err(format!("fifo holds {} > {}", self.fifo_len, self.fifo_capacity));
        }
        if self.diverse_len > self.diverse_capacity {
            return Err(format!("diverse holds {} > {}", self.diverse_len, self.diverse_capacity));
        }
        let counted: usize = self.fifo.iter().map(|s| s.slots.len()).sum();
        if counted != self.fifo_len {
            return Err("fifo length out of sync".into());
        }
        let counted: usize = self.diverse.iter().map(|s| s.slots.len()).sum();
        if counted != self.diverse_len {
            return Err("diverse length out of sync".into());
        }
        if self.stale_slots().len() + self.free.len() + self.len() != self.slots.len() || !self.stale_slots().is_empty() {
            return Err("slot accounting broken".into());
        }
        let open = self.fifo.iter().filter(|s| !s.complete).count();
        if open > 1 || self.fifo.iter().rev().skip(1).any(|s| !s.complete) {
            return Err("only the newest FIFO trajectory may be open".into());
        }
        for s in self.fifo.iter().chain(&self.diverse) {
            let ts: Vec<&Transition> = s.slots.iter().map(|&i| self.slots[i].as_ref().unwrap()).collect();
            if ts.iter().any(|t| t.trajectory != s.id) {
                return Err(format!("trajectory {} holds foreign transitions", s.id));
            }
            for w in ts.windows(2) {
                if w[0].next_observation != w[1].observation || w[0].episode_end {
                    return Err(format!("trajectory {} is not contiguous", s.id));
                }
            }
            if s.complete && !ts.last().is_some_and(|t| t.episode_end) {
                return Err(format!("trajectory {} does not end its episode", s.id));
            }
        }
        for s in &self.diverse {
            if !s.complete {
                return Err("partial trajectory in diverse buffer".into());
            }
        }
        Ok(())
    }

    /// Writes `buffer,trajectory,length,s_0..s_{N-1}` rows for every
    /// complete trajectory.
    pub fn dump_signatures_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dims = self
            .fifo
            .iter()
            .chain(&self.diverse)
            .map(|s| s.signature.len())
            .next()
            .unwrap_or(0);
        let header: Vec<String> = (0..dims).map(|k| format!("s_{k}")).collect();
        writeln!(out, "buffer,trajectory,length{}{}", if dims > 0 { "," } else { "" }, header.join(","))?;
        for (name, list) in [("fifo", self.fifo_trajectories()), ("diverse", self.diverse_trajectories())] {
            for (id, len, sig) in list {
                let cols: Vec<String> = sig.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{name},{id},{len},{}", cols.join(","))?;
            }
        }
        Ok(())
    }
}
