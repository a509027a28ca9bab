//! Scripted-policy family for Minecart.
//!
//! Candidates: for every mine a fast and a slow "drive there, mine until
//! full, drive back" policy, plus the best policy that collects nothing.
//! Each is simulated once with mean ore draws through the frame-skip
//! wrapper, discounting per agent step.

use super::Candidate;
use crate::env::{Environment, FrameSkip, Minecart, MinecartAction, MinecartConfig, MinecartState, OreSampling};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeedProfile {
    /// Accelerate to the speed cap.
    Fast,
    /// Accelerate only while below half the speed cap.
    Slow,
}

/// Agent steps searched when planning the stop inside a mine.
const STOP_SEARCH_DEPTH: usize = 6;
/// The stop search starts once the mine is this close.
const STOP_SEARCH_RADIUS: f64 = 0.6;
/// Stopped means slower than this, with this much margin to the mine edge.
const STOP_SPEED: f64 = 1e-3;
const STOP_MARGIN: f64 = 0.01;
/// Actions searched ahead of the controller on the way home.
const RETURN_LOOKAHEAD: usize = 3;
/// Depth of the search for the cheapest episode that collects nothing.
const IDLE_SEARCH_DEPTH: usize = 10;

#[derive(Clone)]
struct Sim {
    env: FrameSkip<Minecart>,
    gamma: f64,
    discount: f64,
    ret: Vec<f64>,
    done: bool,
    actions: Vec<usize>,
}

impl Sim {
    fn new(config: &MinecartConfig, frame_skip: usize, gamma: f64) -> Result<Self> {
        let mut cfg = config.clone();
        cfg.ore_sampling = OreSampling::Mean;
        let mut env = FrameSkip::new(Minecart::new(cfg, 0)?, frame_skip)?;
        env.reset();
        Ok(Sim {
            ret: vec![0.0; env.num_objectives()],
            env,
            gamma,
            discount: 1.0,
            done: false,
            actions: Vec::new(),
        })
    }

    fn state(&self) -> &MinecartState {
        self.env.inner().state()
    }

    fn config(&self) -> &MinecartConfig {
        self.env.inner().config()
    }

    fn fuel(&self) -> f64 {
        *self.ret.last().expect("fuel objective")
    }

    fn step(&mut self, a: MinecartAction) {
        let st = self.env.step(a as usize).expect("valid action");
        for (g, r) in self.ret.iter_mut().zip(&st.reward) {
            *g += self.discount * r;
        }
        self.discount *= self.gamma;
        self.done = st.done();
        self.actions.push(a as usize);
    }

    /// Degrees to turn (counter-clockwise positive) to face `target`.
    fn heading_error(&self, target: [f64; 2]) -> f64 {
        let s = self.state();
        let bearing = (target[1] - s.position[1]).atan2(target[0] - s.position[0]).to_degrees();
        (bearing - s.heading_deg + 180.0).rem_euclid(360.0) - 180.0
    }

    fn distance(&self, target: [f64; 2]) -> f64 {
        let p = self.state().position;
        (p[0] - target[0]).hypot(p[1] - target[1])
    }

    /// Turn toward `target` when off by more than half of one agent step's
    /// rotation, otherwise apply the speed profile.
    fn cruise_action(&self, target: [f64; 2], profile: SpeedProfile) -> MinecartAction {
        let threshold = self.config().rotation_deg * self.env.skip() as f64 / 2.0;
        let err = self.heading_error(target);
        if err > threshold {
            return MinecartAction::TurnLeft;
        }
        if err < -threshold {
            return MinecartAction::TurnRight;
        }
        let cap = match profile {
            SpeedProfile::Fast => self.config().max_speed,
            SpeedProfile::Slow => self.config().max_speed / 2.0,
        };
        if self.state().speed < cap - 1e-12 {
            MinecartAction::Accelerate
        } else {
            MinecartAction::DoNothing
        }
    }

    fn stopped_in(&self, mine: usize) -> bool {
        let cfg = self.config();
        self.state().speed <= STOP_SPEED && self.distance(cfg.mines[mine].position) <= cfg.mine_radius - STOP_MARGIN
    }

    fn full(&self) -> bool {
        let s = self.state();
        s.content.iter().sum::<f64>() >= self.config().capacity - 1e-9
    }
}

/// Depth-limited search for an action sequence that ends stopped inside
/// `mine`. Fast prefers fewer steps, then less fuel; slow prefers less fuel,
/// then fewer steps.
fn plan_stop(sim: &Sim, mine: usize, profile: SpeedProfile) -> Option<Vec<MinecartAction>> {
    const MOVES: [MinecartAction; 5] = [
        MinecartAction::Brake,
        MinecartAction::DoNothing,
        MinecartAction::Accelerate,
        MinecartAction::TurnLeft,
        MinecartAction::TurnRight,
    ];
    fn dfs(
        sim: &Sim,
        mine: usize,
        profile: SpeedProfile,
        path: &mut Vec<MinecartAction>,
        best: &mut Option<((usize, f64), Vec<MinecartAction>)>,
    ) {
        if path.len() == STOP_SEARCH_DEPTH {
            return;
        }
        for a in MOVES {
            let mut next = sim.clone();
            next.step(a);
            path.push(a);
            if next.stopped_in(mine) && !next.done {
                let score = (path.len(), next.fuel());
                if best.as_ref().is_none_or(|(s, _)| better(profile, score, *s)) {
                    *best = Some((score, path.clone()));
                }
            } else if !next.done {
                dfs(&next, mine, profile, path, best);
            }
            path.pop();
        }
    }
    let mut best = None;
    dfs(sim, mine, profile, &mut Vec::new(), &mut best);
    best.map(|(_, p)| p)
}

/// Drives back to the base with the steering controller.
fn drive_home(sim: &mut Sim, profile: SpeedProfile) {
    while !sim.done {
        let a = sim.cruise_action([0.0, 0.0], profile);
        sim.step(a);
    }
}

/// Ranks finished episodes: fast prefers fewer steps, then more fuel; slow
/// prefers more fuel, then fewer steps.
fn better_finish(profile: SpeedProfile, a: &Sim, b: &Sim) -> bool {
    better(profile, (a.actions.len(), a.fuel()), (b.actions.len(), b.fuel()))
}

fn better(profile: SpeedProfile, a: (usize, f64), b: (usize, f64)) -> bool {
    match profile {
        SpeedProfile::Fast => a.0 < b.0 || (a.0 == b.0 && a.1 > b.1 + 1e-12),
        SpeedProfile::Slow => a.1 > b.1 + 1e-12 || ((a.1 - b.1).abs() <= 1e-12 && a.0 < b.0),
    }
}

/// Receding-horizon return: each step takes the first action of the best
/// `RETURN_LOOKAHEAD`-action prefix, scoring prefixes by finishing the
/// episode with the steering controller.
fn return_home(sim: &mut Sim, profile: SpeedProfile) {
    const MOVES: [MinecartAction; 5] = [
        MinecartAction::Accelerate,
        MinecartAction::DoNothing,
        MinecartAction::TurnLeft,
        MinecartAction::TurnRight,
        MinecartAction::Brake,
    ];
    fn search(sim: &Sim, depth: usize, profile: SpeedProfile, best: &mut Option<Sim>) {
        let mut rollout = sim.clone();
        drive_home(&mut rollout, profile);
        if best.as_ref().is_none_or(|b| better_finish(profile, &rollout, b)) {
            *best = Some(rollout);
        }
        if depth == 0 || sim.done {
            return;
        }
        for a in MOVES {
            let mut next = sim.clone();
            next.step(a);
            search(&next, depth - 1, profile, best);
        }
    }
    while !sim.done {
        let start = sim.actions.len();
        let mut best = None;
        search(sim, RETURN_LOOKAHEAD, profile, &mut best);
        let best = best.expect("search always rolls out once");
        let a = MinecartAction::try_from(best.actions[start]).expect("valid action");
        sim.step(a);
    }
}

/// Simulates the scripted policy for one mine.
pub fn mine_policy(config: &MinecartConfig, frame_skip: usize, gamma: f64, mine: usize, profile: SpeedProfile) -> Result<Candidate> {
    let mut sim = Sim::new(config, frame_skip, gamma)?;
    let target = config.mines[mine].position;
    while !sim.done && !sim.full() {
        if sim.stopped_in(mine) {
            sim.step(MinecartAction::Mine);
            continue;
        }
        let plan = (sim.distance(target) <= STOP_SEARCH_RADIUS)
            .then(|| plan_stop(&sim, mine, profile))
            .flatten();
        match plan {
            Some(actions) => actions.into_iter().for_each(|a| sim.step(a)),
            None => {
                let a = sim.cruise_action(target, profile);
                sim.step(a);
            }
        }
    }
    return_home(&mut sim, profile);
    let letter = (b'c' + mine as u8) as char;
    let speed = match profile {
        SpeedProfile::Fast => "fast",
        SpeedProfile::Slow => "slow",
    };
    Ok(Candidate {
        label: format!("mine {letter} {speed}"),
        value: sim.ret,
        actions: sim.actions,
    })
}

/// The cheapest episode that collects nothing: the better of idling until
/// the step limit and the best short excursion out of the base and back.
pub fn idle_policy(config: &MinecartConfig, frame_skip: usize, gamma: f64) -> Result<Candidate> {
    let start = Sim::new(config, frame_skip, gamma)?;
    let mut best = start.clone();
    while !best.done {
        best.step(MinecartAction::DoNothing);
    }
    for profile in [SpeedProfile::Fast, SpeedProfile::Slow] {
        for accelerate in 1..=2 {
            for coast in 0..=4 {
                let mut sim = start.clone();
                (0..accelerate).for_each(|_| sim.step(MinecartAction::Accelerate));
                (0..coast).for_each(|_| sim.step(MinecartAction::DoNothing));
                return_home(&mut sim, profile);
                if sim.fuel() > best.fuel() {
                    best = sim;
                }
            }
        }
    }
    // branch and bound: fuel only decreases along an episode
    fn dfs(sim: &Sim, depth: usize, best: &mut Sim) {
        if depth == IDLE_SEARCH_DEPTH {
            return;
        }
        for a in [
            MinecartAction::Accelerate,
            MinecartAction::DoNothing,
            MinecartAction::TurnLeft,
            MinecartAction::TurnRight,
        ] {
            let mut next = sim.clone();
            next.step(a);
            if next.fuel() <= best.fuel() {
                continue;
            }
            if next.done {
                *best = next;
            } else {
                dfs(&next, depth + 1, best);
            }
        }
    }
    dfs(&start, 0, &mut best);
    Ok(Candidate {
        label: "idle".into(),
        value: best.ret,
        actions: best.actions,
    })
}

pub fn minecart_candidates(config: &MinecartConfig, frame_skip: usize, gamma: f64) -> Result<Vec<Candidate>> {
    let mut out = vec![idle_policy(config, frame_skip, gamma)?];
    for m in 0..config.mines.len() {
        for profile in [SpeedProfile::Fast, SpeedProfile::Slow] {
            out.push(mine_policy(config, frame_skip, gamma, m, profile)?);
        }
    }
    Ok(out)
}
