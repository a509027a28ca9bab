//! Learning agents for the dynamic-weights setting.
//!
//! | kind        | network                         | loss per transition                         |
//! |-------------|---------------------------------|---------------------------------------------|
//! | `mo`        | vector Q, unconditioned         | absolute, active weight                     |
//! | `cn`        | vector Q, weight-conditioned    | `(|y_t - Q(w_t)| + |y_j - Q(w_j)|) / 2`     |
//! | `cn_active` | vector Q, weight-conditioned    | active weight term only                     |
//! | `cn_uvfa`   | vector Q, weight-conditioned    | sampled weight term only                    |
//! | `uvfa`      | scalar Q, weight-conditioned    | `|r.w_j + gamma Q'(w_j) - Q(w_j)|`          |
//! | `mn`        | vector Q per stored policy      | absolute, active weight                     |
//! | `naive`     | one scalar Q per objective      | absolute, own reward component              |
//!
//! All targets are double-DQN: the online network picks the next action, the
//! target network values it.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvKind, Environment};
use crate::error::{MorlError, Result};
use crate::momath::{self, HasValue, WeightVector};
use crate::net::{LossKind, NetConfig, QNetwork, QParams};
use crate::replay::{ReplayBuffer, ReplayConfig, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Mo,
    Cn,
    CnActive,
    CnUvfa,
    Uvfa,
    Mn,
    Naive,
}

impl AgentKind {
    pub const ALL: [AgentKind; 7] = [
        AgentKind::Mo,
        AgentKind::Cn,
        AgentKind::CnActive,
        AgentKind::CnUvfa,
        AgentKind::Uvfa,
        AgentKind::Mn,
        AgentKind::Naive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Mo => "mo",
            AgentKind::Cn => "cn",
            AgentKind::CnActive => "cn_active",
            AgentKind::CnUvfa => "cn_uvfa",
            AgentKind::Uvfa => "uvfa",
            AgentKind::Mn => "mn",
            AgentKind::Naive => "naive",
        }
    }

    /// Absolute error for every kind; squared error stays available via
    /// `agent.loss` but diverges at the default step size.
    pub fn default_loss(self) -> LossKind {
        LossKind::Absolute
    }
}

/// `[agent]` config section. Unset options take per-environment defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: AgentKind,
    pub batch_size: Option<usize>,
    pub epsilon_start: Option<f64>,
    pub epsilon_end: Option<f64>,
    pub epsilon_steps: Option<u64>,
    /// Training steps between target-network synchronizations.
    pub target_sync: u64,
    pub loss: Option<LossKind>,
    /// Improvement constant of the multi-network policy store.
    pub kappa: f64,
    /// Greedy episodes used to estimate a policy's value on weight change.
    pub eval_episodes: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            algorithm: AgentKind::Cn,
            batch_size: None,
            epsilon_start: None,
            epsilon_end: None,
            epsilon_steps: None,
            target_sync: 150,
            loss: None,
            kappa: 0.0,
            eval_episodes: 5,
        }
    }
}

impl AgentConfig {
    pub fn resolve(&self, env: EnvKind, gamma: f64) -> Result<AgentParams> {
        let (batch, e0, e1, steps) = match env {
            EnvKind::Minecart => (64, 1.0, 0.05, 100_000),
            EnvKind::Dst => (16, 0.1, 0.01, 10_000),
        };
        let p = AgentParams {
            kind: self.algorithm,
            batch_size: self.batch_size.unwrap_or(batch),
            gamma,
            epsilon: EpsilonSchedule {
                start: self.epsilon_start.unwrap_or(e0),
                end: self.epsilon_end.unwrap_or(e1),
                steps: self.epsilon_steps.unwrap_or(steps),
            },
            target_sync: self.target_sync,
            loss: self.loss.unwrap_or(self.algorithm.default_loss()),
            kappa: self.kappa,
            eval_episodes: self.eval_episodes,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Linear anneal from `start` to `end` over `steps` agent steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl EpsilonSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if step >= self.steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.steps as f64
    }
}

/// Fully resolved agent hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams {
    pub kind: AgentKind,
    pub batch_size: usize,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub target_sync: u64,
    pub loss: LossKind,
    pub kappa: f64,
    pub eval_episodes: usize,
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(MorlError::config("agent.batch_size", "must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(MorlError::config("env.gamma", "must be in (0, 1]"));
        }
        for (key, e) in [("agent.epsilon_start", self.epsilon.start), ("agent.epsilon_end", self.epsilon.end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(MorlError::config(key, "must be in [0, 1]"));
            }
        }
        if self.target_sync == 0 {
            return Err(MorlError::config("agent.target_sync", "must be >= 1"));
        }
        if !(self.kappa >= 0.0) {
            return Err(MorlError::config("agent.kappa", "must be >= 0"));
        }
        if self.kind == AgentKind::Mn && self.eval_episodes == 0 {
            return Err(MorlError::config("agent.eval_episodes", "must be >= 1"));
        }
        Ok(())
    }
}

/// Lowest index among the maxima.
pub fn greedy_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy over scalarized Q-rows `q` (actions x objectives). Draws
/// exactly one uniform number, plus one action index when exploring.
pub fn select_action<R: Rng + ?Sized>(q: ArrayView2<f64>, w: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        return rng.random_range(0..q.nrows());
    }
    greedy_index(&scalarized_rows(q, w))
}

fn scalarized_rows(q: ArrayView2<f64>, w: &[f64]) -> Vec<f64> {
    q.rows().into_iter().map(|r| momath::dot(r.as_slice().expect("contiguous"), w)).collect()
}

/// Mean discounted return of `episodes` rollouts of `policy` from reset.
pub fn evaluate_policy<F>(env: &mut dyn Environment, mut policy: F, gamma: f64, episodes: usize) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<usize>,
{
    let mut mean = vec![0.0; env.num_objectives()];
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut discount = 1.0;
        loop {
            let step = env.step(policy(&obs)?)?;
            for (m, r) in mean.iter_mut().zip(&step.reward) {
                *m += discount * r / episodes as f64;
            }
            discount *= gamma;
            if step.done() {
                break;
            }
            obs = step.observation;
        }
    }
    Ok(mean)
}

/// A stored multi-network policy: parameters, the weight it was trained
/// for and its estimated value.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEntry {
    pub network: QNetwork,
    pub weight: WeightVector,
    pub value: Vec<f64>,
}

impl HasValue for PolicyEntry {
    fn value(&self) -> &[f64] {
        &self.value
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Learner {
    Single(QNetwork),
    Multi { current: QNetwork, policies: Vec<PolicyEntry> },
    PerObjective(Vec<QNetwork>),
}

/// Sampled mini-batch.
struct Batch {
    slots: Vec<usize>,
    obs: Array2<f64>,
    next: Array2<f64>,
    actions: Vec<usize>,
    rewards: Array2<f64>,
    /// 0 for terminal transitions, 1 otherwise.
    live: Vec<f64>,
}

impl Batch {
    fn gather(replay: &ReplayBuffer, slots: Vec<usize>) -> Result<Batch> {
        let first = replay.transition(slots[0])?;
        let (b, d, n) = (slots.len(), first.observation.len(), first.reward.len());
        let mut batch = Batch {
            obs: Array2::zeros((b, d)),
            next: Array2::zeros((b, d)),
            actions: Vec::with_capacity(b),
            rewards: Array2::zeros((b, n)),
            live: Vec::with_capacity(b),
            slots: Vec::new(),
        };
        for (i, &slot) in slots.iter().enumerate() {
            let t = replay.transition(slot)?;
            batch.obs.row_mut(i).assign(&ArrayView2::from_shape((1, d), &t.observation).expect("row").row(0));
            batch.next.row_mut(i).assign(&ArrayView2::from_shape((1, d), &t.next_observation).expect("row").row(0));
            batch.rewards.row_mut(i).assign(&ArrayView2::from_shape((1, n), &t.reward).expect("row").row(0));
            batch.actions.push(t.action);
            batch.live.push(if t.terminal { 0.0 } else { 1.0 });
        }
        batch.slots = slots;
        Ok(batch)
    }

    fn len(&self) -> usize {
        self.actions.len()
    }

    fn select(&self, rows: &[usize]) -> Batch {
        Batch {
            slots: rows.iter().map(|&i| self.slots[i]).collect(),
            obs: self.obs.select(Axis(0), rows),
            next: self.next.select(Axis(0), rows),
            actions: rows.iter().map(|&i| self.actions[i]).collect(),
            rewards: self.rewards.select(Axis(0), rows),
            live: rows.iter().map(|&i| self.live[i]).collect(),
        }
    }
}

fn weight_rows(rows: &[&WeightVector]) -> Array2<f64> {
    let n = rows.first().map_or(0, |w| w.len());
    Array2::from_shape_fn((rows.len(), n), |(i, k)| rows[i][k])
}

/// Double-DQN vector targets `r + gamma Q'(s', argmax_a Q(s', a) . w)`.
/// `conditioned` feeds `w` to the network.
fn vector_targets(net: &QNetwork, batch: &Batch, w: &Array2<f64>, conditioned: bool, gamma: f64) -> Result<Array2<f64>> {
    let wv = conditioned.then(|| w.view());
    let online = net.online().forward(batch.next.view(), wv)?;
    let target = net.target().forward(batch.next.view(), wv)?;
    let mut y = batch.rewards.clone();
    for i in 0..batch.len() {
        let scores = scalarized_rows(online.index_axis(Axis(0), i), w.row(i).as_slice().expect("row"));
        let a = greedy_index(&scores);
        for k in 0..y.ncols() {
            y[[i, k]] += gamma * batch.live[i] * target[[i, a, k]];
        }
    }
    Ok(y)
}

/// Scalarized TD errors `w . (y - Q)`.
fn scalar_td(y: &Array2<f64>, q: &Array2<f64>, w: &Array2<f64>) -> Vec<f64> {
    (0..y.nrows())
        .map(|i| (0..y.ncols()).map(|k| w[[i, k]] * (y[[i, k]] - q[[i, k]])).sum())
        .collect()
}

/// Training outcome of one mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainInfo {
    pub loss: f64,
}

/// An agent with its replay buffer, weight history and exploration state.
#[derive(Clone, Debug)]
pub struct Agent {
    params: AgentParams,
    learner: Learner,
    replay: ReplayBuffer,
    history: Vec<WeightVector>,
    steps: u64,
    updates: u64,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(
        params: AgentParams,
        net: &NetConfig,
        replay: &ReplayConfig,
        observation_len: usize,
        num_actions: usize,
        num_objectives: usize,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        net.validate()?;
        let sgd = net.sgd();
        let net_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        let n = num_objectives;
        let learner = match params.kind {
            AgentKind::Mo => Learner::Single(QNetwork::new(&net.shape(observation_len, 0, num_actions, n), sgd, net_seed)?),
            AgentKind::Cn | AgentKind::CnActive | AgentKind::CnUvfa => {
                Learner::Single(QNetwork::new(&net.shape(observation_len, n, num_actions, n), sgd, net_seed)?)
            }
            AgentKind::Uvfa => Learner::Single(QNetwork::new(&net.shape(observation_len, n, num_actions, 1), sgd, net_seed)?),
            AgentKind::Mn => Learner::Multi {
                current: QNetwork::new(&net.shape(observation_len, 0, num_actions, n), sgd, net_seed)?,
                policies: Vec::new(),
            },
            AgentKind::Naive => Learner::PerObjective(
                (0..n)
                    .map(|k| QNetwork::new(&net.shape(observation_len, 0, num_actions, 1), sgd, net_seed.wrapping_add(k as u64)))
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Agent {
            replay: ReplayBuffer::new(replay, params.gamma)?,
            params,
            learner,
            history: Vec::new(),
            steps: 0,
            updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn kind(&self) -> AgentKind {
        self.params.kind
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn history(&self) -> &[WeightVector] {
        &self.history
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon.at(self.steps)
    }

    /// Stored multi-network policies (empty for other agents).
    pub fn policy_set(&self) -> &[PolicyEntry] {
        match &self.learner {
            Learner::Multi { policies, .. } => policies,
            _ => &[],
        }
    }

    /// The network being trained (the first one for the naive agent).
    pub fn network(&self) -> &QNetwork {
        match &self.learner {
            Learner::Single(net) => net,
            Learner::Multi { current, .. } => current,
            Learner::PerObjective(nets) => &nets[0],
        }
    }

    pub fn networks(&self) -> Vec<&QNetwork> {
        match &self.learner {
            Learner::PerObjective(nets) => nets.iter().collect(),
            _ => vec![self.network()],
        }
    }

    /// Adds `w` to the encountered-weight history unless already present.
    pub fn remember(&mut self, w: &WeightVector) {
        if !self.history.contains(w) {
            self.history.push(w.clone());
        }
    }

    /// Scalarized Q-values of every action under `w`.
    pub fn action_scores(&self, obs: &[f64], w: &WeightVector) -> Result<Vec<f64>> {
        MorlError::check_dim(self.num_objectives(), w.len())?;
        Ok(match &self.learner {
            Learner::Single(net) => {
                let q = if net.shape().conditioned() { net.q_values(obs, Some(w))? } else { net.q_values(obs, None)? };
                if self.params.kind == AgentKind::Uvfa {
                    q.column(0).to_vec()
                } else {
                    scalarized_rows(q.view(), w)
                }
            }
            Learner::Multi { current, .. } => scalarized_rows(current.q_values(obs, None)?.view(), w),
            Learner::PerObjective(nets) => {
                let mut scores = vec![0.0; nets[0].shape().num_actions];
                for (k, net) in nets.iter().enumerate() {
                    let q = net.q_values(obs, None)?;
                    for (s, v) in scores.iter_mut().zip(q.column(0)) {
                        *s += w[k] * v;
                    }
                }
                scores
            }
        })
    }

    fn num_objectives(&self) -> usize {
        match &self.learner {
            Learner::PerObjective(nets) => nets.len(),
            Learner::Single(net) if self.params.kind == AgentKind::Uvfa => net.shape().weight_len,
            _ => self.network().shape().num_objectives,
        }
    }

    pub fn greedy_action(&self, obs: &[f64], w: &WeightVector) -> Result<usize> {
        Ok(greedy_index(&self.action_scores(obs, w)?))
    }

    /// Epsilon-greedy action under the active weight `w`, which is added to
    /// the weight history.
    pub fn act(&mut self, obs: &[f64], w: &WeightVector) -> Result<usize> {
        self.remember(w);
        let scores = self.action_scores(obs, w)?;
        let eps = self.epsilon();
        if self.rng.random::<f64>() < eps {
            return Ok(self.rng.random_range(0..scores.len()));
        }
        Ok(greedy_index(&scores))
    }

    /// Stores a transition, then trains on one prioritized mini-batch.
    pub fn observe(&mut self, transition: Transition, w: &WeightVector) -> Result<TrainInfo> {
        self.remember(w);
        self.replay.push(transition);
        self.steps += 1;
        let info = self.train(w)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.params.target_sync) {
            match &mut self.learner {
                Learner::Single(net) | Learner::Multi { current: net, .. } => net.sync_target(),
                Learner::PerObjective(nets) => nets.iter_mut().for_each(QNetwork::sync_target),
            }
        }
        Ok(info)
    }

    /// One gradient step on a batch sampled from the replay buffer.
    pub fn train(&mut self, w_t: &WeightVector) -> Result<TrainInfo> {
        let slots = self.replay.sample(self.params.batch_size, &mut self.rng)?;
        let batch = Batch::gather(&self.replay, slots)?;
        let b = batch.len();
        let gamma = self.params.gamma;
        let loss_kind = self.params.loss;
        let kind = self.params.kind;
        // every weight-conditioned variant draws the same history samples
        let sampled: Vec<usize> = match kind {
            AgentKind::Cn | AgentKind::CnActive | AgentKind::CnUvfa | AgentKind::Uvfa => {
                if self.history.is_empty() {
                    return Err(MorlError::EmptyWeightHistory);
                }
                (0..b).map(|_| self.rng.random_range(0..self.history.len())).collect()
            }
            _ => Vec::new(),
        };
        let active_w = weight_rows(&vec![w_t; b]);
        match &mut self.learner {
            Learner::Single(net) if kind == AgentKind::Uvfa => {
                let ws: Vec<&WeightVector> = sampled.iter().map(|&j| &self.history[j]).collect();
                let wm = weight_rows(&ws);
                let online = net.online().forward(batch.next.view(), Some(wm.view()))?;
                let target = net.target().forward(batch.next.view(), Some(wm.view()))?;
                let mut y = Array2::zeros((b, 1));
                for i in 0..b {
                    let a = greedy_index(&online.slice(ndarray::s![i, .., 0]).to_vec());
                    let r = momath::dot(batch.rewards.row(i).as_slice().expect("row"), ws[i]);
                    y[[i, 0]] = r + gamma * batch.live[i] * target[[i, a, 0]];
                }
                let (loss, g, q) =
                    net.online()
                        .loss_and_grad(batch.obs.view(), Some(wm.view()), &batch.actions, y.view(), &vec![1.0 / b as f64; b], loss_kind)?;
                net.apply_update(&g)?;
                let td: Vec<f64> = (0..b).map(|i| y[[i, 0]] - q[[i, 0]]).collect();
                self.replay.update_priorities(&batch.slots, &td, None)?;
                Ok(TrainInfo { loss })
            }
            Learner::Single(net) if kind != AgentKind::Mo => {
                let ws: Vec<&WeightVector> = sampled.iter().map(|&j| &self.history[j]).collect();
                let same: Vec<bool> = ws.iter().map(|w| *w == w_t).collect();
                let mut loss = 0.0;
                let mut grads = QParams::zeros(net.shape())?;
                let mut td_active = vec![0.0; b];
                if kind != AgentKind::CnUvfa {
                    let scale: Vec<f64> = (0..b)
                        .map(|i| if kind == AgentKind::CnActive || same[i] { 1.0 } else { 0.5 } / b as f64)
                        .collect();
                    let y = vector_targets(net, &batch, &active_w, true, gamma)?;
                    let (l, g, q) = net.online().loss_and_grad(
                        batch.obs.view(),
                        Some(active_w.view()),
                        &batch.actions,
                        y.view(),
                        &scale,
                        loss_kind,
                    )?;
                    loss += l;
                    grads.add_assign(&g)?;
                    td_active = scalar_td(&y, &q, &active_w);
                }
                // rows trained on a sampled weight different from the active one
                let rows: Vec<usize> = match kind {
                    AgentKind::CnUvfa => (0..b).collect(),
                    AgentKind::Cn => (0..b).filter(|&i| !same[i]).collect(),
                    _ => Vec::new(),
                };
                let mut td_sampled = td_active.clone();
                if !rows.is_empty() {
                    let sub = batch.select(&rows);
                    let wm = weight_rows(&rows.iter().map(|&i| ws[i]).collect::<Vec<_>>());
                    let y = vector_targets(net, &sub, &wm, true, gamma)?;
                    let s = if kind == AgentKind::Cn { 0.5 } else { 1.0 } / b as f64;
                    let (l, g, q) =
                        net.online()
                            .loss_and_grad(sub.obs.view(), Some(wm.view()), &sub.actions, y.view(), &vec![s; rows.len()], loss_kind)?;
                    loss += l;
                    grads.add_assign(&g)?;
                    for (r, td) in rows.iter().zip(scalar_td(&y, &q, &wm)) {
                        td_sampled[*r] = td;
                    }
                }
                net.apply_update(&grads)?;
                match kind {
                    AgentKind::Cn => self.replay.update_priorities(&batch.slots, &td_active, Some(&td_sampled))?,
                    AgentKind::CnActive => self.replay.update_priorities(&batch.slots, &td_active, None)?,
                    _ => self.replay.update_priorities(&batch.slots, &td_sampled, None)?,
                }
                Ok(TrainInfo { loss })
            }
            Learner::Single(net) | Learner::Multi { current: net, .. } => {
                let y = vector_targets(net, &batch, &active_w, false, gamma)?;
                let (loss, g, q) =
                    net.online()
                        .loss_and_grad(batch.obs.view(), None, &batch.actions, y.view(), &vec![1.0 / b as f64; b], loss_kind)?;
                net.apply_update(&g)?;
                self.replay.update_priorities(&batch.slots, &scalar_td(&y, &q, &active_w), None)?;
                Ok(TrainInfo { loss })
            }
            Learner::PerObjective(nets) => {
                let mut loss = 0.0;
                let mut td = vec![0.0; b];
                for (k, net) in nets.iter_mut().enumerate() {
                    let single = Batch {
                        rewards: batch.rewards.select(Axis(1), &[k]),
                        slots: Vec::new(),
                        obs: batch.obs.clone(),
                        next: batch.next.clone(),
                        actions: batch.actions.clone(),
                        live: batch.live.clone(),
                    };
                    let one = Array2::ones((b, 1));
                    let y = vector_targets(net, &single, &one, false, gamma)?;
                    let (l, g, q) =
                        net.online()
                            .loss_and_grad(single.obs.view(), None, &single.actions, y.view(), &vec![1.0 / b as f64; b], loss_kind)?;
                    net.apply_update(&g)?;
                    loss += l;
                    for i in 0..b {
                        td[i] += w_t[k] * (y[[i, 0]] - q[[i, 0]]);
                    }
                }
                self.replay.update_priorities(&batch.slots, &td, None)?;
                Ok(TrainInfo { loss })
            }
        }
    }

    /// Handles a change of the active weight. Only the multi-network agent
    /// reacts: it values the outgoing policy greedily on `eval_env`, stores it
    /// if it improves on the policy set for some encountered weight, prunes,
    /// and continues from the stored policy that is best for `w_new`.
    pub fn on_weight_change(&mut self, w_old: &WeightVector, w_new: &WeightVector, eval_env: &mut dyn Environment) -> Result<()> {
        if w_old == w_new {
            return Ok(());
        }
        if self.params.kind != AgentKind::Mn {
            self.remember(w_new);
            return Ok(());
        }
        self.remember(w_old);
        let value = {
            let agent = &*self;
            evaluate_policy(eval_env, |obs| agent.greedy_action(obs, w_old), self.params.gamma, self.params.eval_episodes)?
        };
        self.store_policy(w_old.clone(), value);
        if let Learner::Multi { current, policies } = &mut self.learner {
            let best = momath::best_policy_index(policies, w_new)?;
            *current = policies[best].network.clone();
            current.sync_target();
        }
        self.remember(w_new);
        Ok(())
    }

    /// Adds the current multi-network policy with the given value if it is an
    /// improvement, then prunes. Returns whether it was stored.
    pub fn store_policy(&mut self, weight: WeightVector, value: Vec<f64>) -> bool {
        let kappa = self.params.kappa;
        let history = self.history.clone();
        let Learner::Multi { current, policies } = &mut self.learner else {
            return false;
        };
        if !momath::is_improvement(&value, policies, &history, kappa) {
            return false;
        }
        policies.push(PolicyEntry {
            network: current.clone(),
            weight,
            value,
        });
        *policies = momath::prune_redundant(std::mem::take(policies), &history, kappa);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Step;
    use ndarray::array;

    /// Two states, two actions. From s0: a0 ends with 1, a1 moves to s1.
    /// From s1: a0 ends with 0, a1 ends with 3. Rewards are padded with zero
    /// objectives up to `objectives`, placed at `slot`.
    #[derive(Clone)]
    struct Chain {
        state: usize,
        objectives: usize,
        slot: usize,
    }

    impl Chain {
        fn reward(&self, r: f64) -> Vec<f64> {
            let mut v = vec![0.0; self.objectives];
            v[self.slot] = r;
            v
        }
    }

    impl Environment for Chain {
        fn num_actions(&self) -> usize {
            2
        }
        fn num_objectives(&self) -> usize {
            self.objectives
        }
        fn observation_len(&self) -> usize {
            2
        }
        fn reset(&mut self) -> Vec<f64> {
            self.state = 0;
            self.observation()
        }
        fn step(&mut self, action: usize) -> Result<Step> {
            let (r, terminal) = match (self.state, action) {
                (0, 0) => (1.0, true),
                (0, _) => {
                    self.state = 1;
                    (0.0, false)
                }
                (_, 0) => (0.0, true),
                _ => (3.0, true),
            };
            Ok(Step {
                observation: self.observation(),
                reward: self.reward(r),
                terminal,
                truncated: false,
            })
        }
        fn observation(&self) -> Vec<f64> {
            let mut v = vec![0.0; 2];
            v[self.state] = 1.0;
            v
        }
    }

    /// Value iteration on the chain: optimal greedy actions per state.
    fn chain_optimal(gamma: f64) -> [usize; 2] {
        let q1 = [0.0, 3.0];
        let v1 = q1[greedy_index(&q1)];
        let q0 = [1.0, gamma * v1];
        [greedy_index(&q0), greedy_index(&q1)]
    }

    fn params(kind: AgentKind) -> AgentParams {
        AgentParams {
            kind,
            batch_size: 8,
            gamma: 0.9,
            epsilon: EpsilonSchedule { start: 0.5, end: 0.1, steps: 500 },
            target_sync: 20,
            loss: kind.default_loss(),
            kappa: 0.0,
            eval_episodes: 1,
        }
    }

    fn small_net() -> NetConfig {
        NetConfig {
            hidden: vec![16],
            stream_hidden: 0,
            ..NetConfig::default()
        }
    }

    fn replay_config() -> ReplayConfig {
        ReplayConfig {
            capacity: 500,
            ..ReplayConfig::default()
        }
    }

    fn run_chain(agent: &mut Agent, env: &mut Chain, w: &WeightVector, steps: usize) {
        let mut obs = env.reset();
        for _ in 0..steps {
            let a = agent.act(&obs, w).unwrap();
            let st = env.step(a).unwrap();
            let t = Transition {
                observation: obs.clone(),
                action: a,
                reward: st.reward.clone(),
                next_observation: st.observation.clone(),
                terminal: st.terminal,
                episode_end: st.done(),
                trajectory: 0,
            };
            agent.observe(t, w).unwrap();
            obs = if st.done() { env.reset() } else { st.observation };
        }
    }

    #[test]
    fn epsilon_anneals_linearly() {
        let e = EpsilonSchedule { start: 1.0, end: 0.05, steps: 100 };
        assert_eq!(e.at(0), 1.0);
        assert!((e.at(50) - 0.525).abs() < 1e-12);
        assert_eq!(e.at(100), 0.05);
        assert_eq!(e.at(10_000), 0.05);
    }

    #[test]
    fn selection_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(select_action(q.view(), &[1.0, 0.0], 0.0, &mut rng), 0);
        assert_eq!(select_action(q.view(), &[0.0, 1.0], 0.0, &mut rng), 1);
        assert_eq!(select_action(q.view(), &[0.5, 0.5], 0.0, &mut rng), 0);
        let q4 = Array2::<f64>::zeros((4, 2));
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[select_action(q4.view(), &[0.5, 0.5], 1.0, &mut rng)] += 1;
        }
        // chi-square with 3 degrees of freedom, 1% critical value 11.34
        let chi: f64 = counts.iter().map(|&c| (c as f64 - 10_000.0).powi(2) / 10_000.0).sum();
        assert!(chi < 11.34, "{counts:?}");
    }

    #[test]
    fn single_objective_agents_learn_the_chain() {
        let w = WeightVector::new(vec![1.0]).unwrap();
        let optimal = chain_optimal(0.9);
        assert_eq!(optimal, [1, 1]);
        for kind in [AgentKind::Mo, AgentKind::Cn, AgentKind::CnActive, AgentKind::CnUvfa, AgentKind::Uvfa, AgentKind::Naive, AgentKind::Mn] {
            let mut env = Chain { state: 0, objectives: 1, slot: 0 };
            let mut agent = Agent::new(params(kind), &small_net(), &replay_config(), 2, 2, 1, 3).unwrap();
            run_chain(&mut agent, &mut env, &w, 3000);
            let greedy = [agent.greedy_action(&[1.0, 0.0], &w).unwrap(), agent.greedy_action(&[0.0, 1.0], &w).unwrap()];
            assert_eq!(greedy, optimal, "{kind:?}");
        }
    }

    #[test]
    fn naive_nets_learn_their_own_component() {
        // objective 1 carries the chain reward, objective 0 is always zero
        let w = WeightVector::new(vec![0.0, 1.0]).unwrap();
        let mut env = Chain { state: 0, objectives: 2, slot: 1 };
        let mut agent = Agent::new(params(AgentKind::Naive), &small_net(), &replay_config(), 2, 2, 2, 5).unwrap();
        run_chain(&mut agent, &mut env, &w, 3000);
        let q = agent.networks()[1].q_values(&[1.0, 0.0], None).unwrap();
        // optimal values at s0: a0 -> 1, a1 -> 0.9 * 3
        assert!((q[[0, 0]] - 1.0).abs() < 0.2 && (q[[1, 0]] - 2.7).abs() < 0.3, "{q:?}");
        assert_eq!(agent.greedy_action(&[1.0, 0.0], &w).unwrap(), 1);
    }

    #[test]
    fn cn_with_single_weight_matches_cn_active() {
        let w = WeightVector::new(vec![0.3, 0.7]).unwrap();
        let run = |kind| {
            let mut env = Chain { state: 0, objectives: 2, slot: 1 };
            let mut agent = Agent::new(params(kind), &small_net(), &replay_config(), 2, 2, 2, 9).unwrap();
            run_chain(&mut agent, &mut env, &w, 300);
            agent.network().clone()
        };
        let cn = run(AgentKind::Cn);
        assert_eq!(cn, run(AgentKind::CnActive));
        assert_eq!(cn, run(AgentKind::CnUvfa));
    }

    #[test]
    fn targets_of_terminal_transitions_are_rewards() {
        let shape = small_net().shape(2, 2, 2, 2);
        let net = QNetwork::new(&shape, small_net().sgd(), 0).unwrap();
        let batch = Batch {
            slots: vec![0, 1],
            obs: array![[1.0, 0.0], [0.0, 1.0]],
            next: array![[0.0, 1.0], [0.0, 1.0]],
            actions: vec![0, 1],
            rewards: array![[1.0, -1.0], [0.5, 0.0]],
            live: vec![0.0, 1.0],
        };
        let w = array![[0.5, 0.5], [0.5, 0.5]];
        let y = vector_targets(&net, &batch, &w, true, 0.9).unwrap();
        assert_eq!(y.row(0).to_vec(), vec![1.0, -1.0]);
        let q = net.target().forward(batch.next.view(), Some(w.view())).unwrap();
        let online = net.online().forward(batch.next.view(), Some(w.view())).unwrap();
        let a = greedy_index(&scalarized_rows(online.index_axis(Axis(0), 1), &[0.5, 0.5]));
        assert!((y[[1, 0]] - (0.5 + 0.9 * q[[1, a, 0]])).abs() < 1e-12);
    }

    #[test]
    fn mn_stores_first_policy_and_reuses_best() {
        let w0 = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let w1 = WeightVector::new(vec![0.0, 1.0]).unwrap();
        let w2 = WeightVector::new(vec![0.9, 0.1]).unwrap();
        let mut agent = Agent::new(params(AgentKind::Mn), &small_net(), &replay_config(), 2, 2, 2, 1).unwrap();
        agent.remember(&w0);
        assert!(agent.store_policy(w0.clone(), vec![1.0, 0.0]));
        let first = agent.network().clone();
        // perturb the current network so the two stored policies differ
        let mut g = QParams::zeros(agent.network().shape()).unwrap();
        g.set_flat(0, 1.0);
        if let Learner::Multi { current, .. } = &mut agent.learner {
            current.apply_update(&g).unwrap();
        }
        agent.remember(&w1);
        assert!(agent.store_policy(w1.clone(), vec![0.0, 1.0]));
        assert_eq!(agent.policy_set().len(), 2);
        let best = momath::best_policy_index(agent.policy_set(), &w2).unwrap();
        assert_eq!(agent.policy_set()[best].network, first);
    }

    #[test]
    fn mn_prunes_dominated_entries() {
        let ws = [vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]].map(|w| WeightVector::new(w).unwrap());
        let mut agent = Agent::new(params(AgentKind::Mn), &small_net(), &replay_config(), 2, 2, 2, 1).unwrap();
        for w in &ws {
            agent.remember(w);
        }
        assert!(agent.store_policy(ws[0].clone(), vec![1.0, 0.0]));
        assert!(agent.store_policy(ws[2].clone(), vec![0.0, 1.0]));
        assert!(!agent.store_policy(ws[1].clone(), vec![0.2, 0.2]));
        assert!(agent.store_policy(ws[1].clone(), vec![1.0, 1.0]));
        let values: Vec<_> = agent.policy_set().iter().map(|p| p.value.clone()).collect();
        assert_eq!(values, vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn mn_weight_change_evaluates_and_switches() {
        let w0 = WeightVector::new(vec![0.0, 1.0]).unwrap();
        let w1 = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let mut agent = Agent::new(params(AgentKind::Mn), &small_net(), &replay_config(), 2, 2, 2, 1).unwrap();
        let mut env = Chain { state: 0, objectives: 2, slot: 1 };
        run_chain(&mut agent, &mut env, &w0, 50);
        let mut eval = env.clone();
        agent.on_weight_change(&w0, &w1, &mut eval).unwrap();
        assert_eq!(agent.policy_set().len(), 1);
        assert_eq!(agent.policy_set()[0].weight, w0);
        assert_eq!(agent.history(), &[w0.clone(), w1.clone()]);
        assert_eq!(agent.network().online(), agent.policy_set()[0].network.online());
    }
}
