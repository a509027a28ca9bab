//! Experiment orchestration: config loading, seeded runs, per-episode
//! regret logs, smoothing, aggregation and plot emission.
//!
//! ```toml
//! [env]
//! kind = "dst"
//!
//! [agent]
//! algorithm = "cn"
//!
//! [schedule]
//! mode = "sparse"
//!
//! [replay]
//! diverse = true
//!
//! [net]
//! hidden = [64]
//!
//! [run]
//! steps = 50000
//! seeds = [0, 1, 2]
//! ```

pub mod aggregate;
pub mod records;
pub mod svg;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentConfig};
use crate::env::config::toml_error;
use crate::env::{EnvConfig, EnvKind, OreSampling};
use crate::error::{MorlError, Result};
use crate::net::NetConfig;
use crate::oracle::Oracle;
use crate::replay::{ReplayConfig, Transition};
use crate::schedule::ScheduleConfig;

pub use aggregate::{aggregate, mean_regret, moving_average, step_series, Aggregate, RegretSummary};
pub use records::{read_log_csv, write_log_csv, EpisodeRecord, RunLog};

/// `[replay]` section; the capacity defaults per environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    /// Total transitions; 100 000 for Minecart, 10 000 for DST.
    pub capacity: Option<usize>,
    pub diverse: bool,
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for ReplaySection {
    fn default() -> Self {
        let d = ReplayConfig::default();
        ReplaySection {
            capacity: None,
            diverse: d.diverse,
            alpha: d.alpha,
            epsilon: d.epsilon,
        }
    }
}

impl ReplaySection {
    pub fn resolve(&self, env: EnvKind) -> Result<ReplayConfig> {
        let capacity = self.capacity.unwrap_or(match env {
            EnvKind::Minecart => 100_000,
            EnvKind::Dst => 10_000,
        });
        if capacity < 2 {
            return Err(MorlError::config("replay.capacity", "must be >= 2"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(MorlError::config("replay.alpha", "must be finite and >= 0"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(MorlError::config("replay.epsilon", "must be finite and > 0"));
        }
        Ok(ReplayConfig {
            capacity,
            diverse: self.diverse,
            alpha: self.alpha,
            epsilon: self.epsilon,
        })
    }
}

/// `[run]` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Agent steps per run.
    pub steps: u64,
    pub seeds: Vec<u64>,
    /// Moving-average window in agent steps.
    pub window: usize,
    /// Tail length in agent steps for the final mean regret.
    pub last_steps: u64,
    /// Sampling stride of the emitted curves, in agent steps.
    pub curve_stride: usize,
    /// Write replay signatures at the end of each run.
    pub signatures: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            steps: 50_000,
            seeds: (0..10).collect(),
            window: 200,
            last_steps: 10_000,
            curve_stride: 100,
            signatures: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub schedule: ScheduleConfig,
    pub replay: ReplaySection,
    pub net: NetConfig,
    pub run: RunConfig,
}

const SECTIONS: [&str; 6] = ["env", "agent", "schedule", "replay", "net", "run"];

fn section<T: serde::de::DeserializeOwned + Default>(table: &toml::Table, name: &str) -> Result<T> {
    match table.get(name) {
        None => Ok(T::default()),
        Some(value) => value.clone().try_into().map_err(|e| toml_error(&e, name)),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| MorlError::config("<document>", e.message()))?;
        if let Some(unknown) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(MorlError::config(unknown.clone(), "unknown section"));
        }
        let env_value = table.get("env").ok_or_else(|| MorlError::config("env", "missing [env] section"))?;
        let mut env: EnvConfig = env_value.clone().try_into().map_err(|e| toml_error(&e, "env"))?;
        env.resolve(base_dir)?;
        let cfg = ExperimentConfig {
            env,
            agent: section(&table, "agent")?,
            schedule: section(&table, "schedule")?,
            replay: section(&table, "replay")?,
            net: section(&table, "net")?,
            run: section(&table, "run")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks every section, resolving per-environment defaults.
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.resolve(self.env.kind, self.env.gamma())?;
        self.schedule.build(self.env.kind, self.env.num_objectives(), 0)?;
        self.replay.resolve(self.env.kind)?;
        self.net.validate()?;
        if self.run.seeds.is_empty() {
            return Err(MorlError::config("run.seeds", "need at least one seed"));
        }
        if self.run.window == 0 {
            return Err(MorlError::config("run.window", "must be >= 1"));
        }
        if self.run.curve_stride == 0 {
            return Err(MorlError::config("run.curve_stride", "must be >= 1"));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer: independent seeds for the components of one run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of one seeded run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub log: RunLog,
    /// Replay signatures as CSV, when requested.
    pub signatures: Option<String>,
}

/// Runs the training loop for one seed.
///
/// Each agent step reads the active weight from the schedule, acts
/// epsilon-greedily, stores the transition and trains on one batch. Every
/// finished episode is logged with the weight active at its first step.
pub fn run_seed(cfg: &ExperimentConfig, oracle: &Oracle, seed: u64) -> Result<RunOutput> {
    let kind = cfg.env.kind;
    let n = cfg.env.num_objectives();
    let params = cfg.agent.resolve(kind, cfg.env.gamma())?;
    let replay = cfg.replay.resolve(kind)?;
    let schedule = cfg.schedule.build(kind, n, derive_seed(seed, 1))?;
    let mut env = cfg.env.build(derive_seed(seed, 2))?;
    let mut eval_cfg = cfg.env.clone();
    if let Some(mc) = eval_cfg.minecart.as_mut() {
        mc.ore_sampling = OreSampling::Mean;
    } else if kind == EnvKind::Minecart {
        eval_cfg.minecart = Some(crate::env::MinecartConfig {
            ore_sampling: OreSampling::Mean,
            ..cfg.env.minecart_config()
        });
    }
    let mut eval_env = eval_cfg.build(derive_seed(seed, 3))?;
    let mut agent = Agent::new(
        params,
        &cfg.net,
        &replay,
        env.observation_len(),
        env.num_actions(),
        n,
        derive_seed(seed, 4),
    )?;

    let gamma = cfg.env.gamma();
    let mut log = RunLog { seed, records: Vec::new() };
    let mut obs = env.reset();
    let mut episode = 0u64;
    let mut ret = vec![0.0; n];
    let mut discount = 1.0;
    let mut active = schedule.weight(0, 0);
    let mut episode_weight = active.clone();
    for step in 0..cfg.run.steps {
        let w = schedule.weight(step, episode);
        if w != active {
            agent.on_weight_change(&active, &w, &mut eval_env)?;
            active = w.clone();
        }
        let action = agent.act(&obs, &w)?;
        let st = env.step(action)?;
        for (g, r) in ret.iter_mut().zip(&st.reward) {
            *g += discount * r;
        }
        discount *= gamma;
        let done = st.done();
        agent.observe(
            Transition {
                observation: std::mem::take(&mut obs),
                action,
                reward: st.reward,
                next_observation: st.observation.clone(),
                terminal: st.terminal,
                episode_end: done,
                trajectory: 0,
            },
            &w,
        )?;
        obs = st.observation;
        if done {
            let wv = episode_weight.as_slice();
            let scalarized: f64 = ret.iter().zip(wv).map(|(g, x)| g * x).sum();
            let optimal = oracle.optimal_value(wv)?;
            log.records.push(EpisodeRecord {
                episode,
                step: step + 1,
                weight: wv.to_vec(),
                ret: std::mem::replace(&mut ret, vec![0.0; n]),
                scalarized,
                optimal,
                regret: optimal - scalarized,
            });
            episode += 1;
            discount = 1.0;
            obs = env.reset();
            episode_weight = schedule.weight(step + 1, episode);
        }
    }
    let signatures = if cfg.run.signatures {
        let mut buf = Vec::new();
        agent.replay().dump_signatures_csv(&mut buf)?;
        Some(String::from_utf8(buf).expect("CSV is UTF-8"))
    } else {
        None
    };
    Ok(RunOutput { log, signatures })
}

/// Runs every seed in parallel; outputs follow the seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    let oracle = Oracle::from_env_config(&cfg.env)?;
    if oracle.kind() == crate::oracle::OracleKind::LowerBound {
        ::log::warn!("custom Minecart configuration: oracle values are a lower bound");
    }
    cfg.run.seeds.par_iter().map(|&seed| run_seed(cfg, &oracle, seed)).collect()
}

/// Writes per-run logs, curves, the summary and plots into `out`.
pub fn write_outputs(cfg: &ExperimentConfig, outputs: &[RunOutput], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for o in outputs {
        let file = std::fs::File::create(out.join(format!("run_{}.csv", o.log.seed)))?;
        write_log_csv(std::slice::from_ref(&o.log), std::io::BufWriter::new(file))?;
        if let Some(sig) = &o.signatures {
            std::fs::write(out.join(format!("signatures_{}.csv", o.log.seed)), sig)?;
            std::fs::write(out.join(format!("signatures_{}.svg", o.log.seed)), svg::signature_scatter(sig)?)?;
        }
    }
    let logs: Vec<RunLog> = outputs.iter().map(|o| o.log.clone()).collect();
    write_summary(&logs, cfg.run.window, cfg.run.curve_stride, cfg.run.last_steps, out)
}

/// Aggregates logs into `curves.csv`, `summary.csv` and two SVG charts.
pub fn write_summary(logs: &[RunLog], window: usize, stride: usize, last_steps: u64, out: &Path) -> Result<()> {
    let agg = aggregate(logs, window, stride)?;
    std::fs::write(out.join("curves.csv"), agg.to_csv())?;
    let overall = mean_regret(logs, 0)?;
    let horizon = logs.iter().filter_map(|l| l.records.last().map(|r| r.step)).min().unwrap_or(0);
    let tail = mean_regret(logs, horizon.saturating_sub(last_steps))?;
    let summary = format!(
        "scope,runs,mean_regret,std_regret\noverall,{},{},{}\nlast_{last_steps},{},{},{}\n",
        overall.runs, overall.mean, overall.std, tail.runs, tail.mean, tail.std
    );
    std::fs::write(out.join("summary.csv"), summary)?;
    std::fs::write(
        out.join("regret.svg"),
        svg::line_chart("Smoothed episodic regret", "agent steps", "regret", &agg.steps, &agg.mean, Some(&agg.std)),
    )?;
    std::fs::write(
        out.join("cumulative_regret.svg"),
        svg::line_chart(
            "Cumulative regret",
            "agent steps",
            "cumulative regret",
            &agg.steps,
            &agg.cumulative_mean,
            Some(&agg.cumulative_std),
        ),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(text_extra: &str) -> ExperimentConfig {
        let text = format!(
            "[env]\nkind = \"dst\"\nmap = \"builtin:small\"\n\n[schedule]\nmode = \"fixed\"\nweight = [0.5, 0.5]\n\n[run]\nsteps = 300\nseeds = [1, 2]\n{text_extra}"
        );
        ExperimentConfig::from_toml_str(&text, Path::new(".")).unwrap()
    }

    #[test]
    fn defaults_and_sections() {
        let cfg = small_config("");
        assert_eq!(cfg.run.window, 200);
        assert_eq!(cfg.replay.resolve(EnvKind::Dst).unwrap().capacity, 10_000);
        assert_eq!(cfg.replay.resolve(EnvKind::Minecart).unwrap().capacity, 100_000);
        assert_eq!(cfg.agent.target_sync, 150);
    }

    #[test]
    fn config_errors_name_the_key() {
        let err = |text: &str| match ExperimentConfig::from_toml_str(text, Path::new(".")) {
            Err(MorlError::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(err("[env]\nkind = \"dst\"\n[agent]\nbogus = 1\n"), "agent.bogus");
        assert_eq!(err("[env]\nkind = \"dst\"\n[extra]\n"), "extra");
        assert_eq!(err("[agent]\n"), "env");
        assert_eq!(err("[env]\nkind = \"dst\"\n[run]\nseeds = []\n"), "run.seeds");
        assert_eq!(err("[env]\nkind = \"dst\"\n[replay]\nalpha = -1.0\n"), "replay.alpha");
        assert_eq!(err("[env]\nkind = \"dst\"\n[schedule]\nmode = \"fixed\"\nweight = [1.0]\n"), "schedule.weight");
    }

    #[test]
    fn zero_steps_gives_empty_log() {
        let mut cfg = small_config("");
        cfg.run.steps = 0;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.iter().all(|o| o.log.records.is_empty()));
    }

    #[test]
    fn logs_are_consistent_and_deterministic() {
        let cfg = small_config("");
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.log, y.log);
            assert_eq!(x.signatures, y.signatures);
        }
        let log = &a[0].log;
        assert!(!log.records.is_empty());
        let mut last = 0;
        for r in &log.records {
            assert!(r.step > last && r.step <= cfg.run.steps);
            last = r.step;
            assert!(r.regret >= -1e-9, "{r:?}");
            assert!((r.optimal - r.scalarized - r.regret).abs() < 1e-12);
        }
        assert_ne!(a[0].log, a[1].log);
    }

    #[test]
    fn outputs_written() {
        let cfg = small_config("window = 20\ncurve_stride = 10\nlast_steps = 100\n");
        let out = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&cfg, &out, dir.path()).unwrap();
        for f in ["run_1.csv", "run_2.csv", "curves.csv", "summary.csv", "regret.svg", "cumulative_regret.svg", "signatures_1.csv", "signatures_1.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = read_log_csv(&std::fs::read_to_string(dir.path().join("run_1.csv")).unwrap()).unwrap();
        assert_eq!(back, vec![out[0].log.clone()]);
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..5).map(|k| derive_seed(7, k)).collect();
        for i in 0..5 {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
    }
}
