//! Optimal scalarized values for regret: exact shortest-path enumeration
//! for DST, a scripted-policy family for Minecart, and the weight-simplex
//! partition diagnostic.

pub mod dst;
pub mod minecart;

use std::io::Write;

use crate::env::{DstMap, EnvConfig, EnvKind, MinecartConfig};
use crate::error::{MorlError, Result};
use crate::momath::{HasValue, WeightVector};

pub use dst::{dst_candidates, dst_exhaustive_outcomes, dst_path_value, dst_shortest_paths};
pub use minecart::{idle_policy, mine_policy, minecart_candidates, SpeedProfile};

/// One deterministic policy and its discounted return vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub label: String,
    pub value: Vec<f64>,
    /// Agent-step actions that realize `value`.
    pub actions: Vec<usize>,
}

impl HasValue for Candidate {
    fn value(&self) -> &[f64] {
        &self.value
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    /// Provably optimal.
    Exact,
    /// Best of a scripted family that covers the default configuration.
    PolicyFamily,
    /// Best of a scripted family on a custom configuration.
    LowerBound,
}

impl OracleKind {
    pub fn name(self) -> &'static str {
        match self {
            OracleKind::Exact => "exact",
            OracleKind::PolicyFamily => "policy family",
            OracleKind::LowerBound => "lower bound",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Oracle {
    candidates: Vec<Candidate>,
    kind: OracleKind,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Oracle {
    pub fn new(candidates: Vec<Candidate>, kind: OracleKind) -> Result<Self> {
        if candidates.is_empty() {
            return Err(MorlError::EmptyPolicySet);
        }
        Ok(Oracle { candidates, kind })
    }

    pub fn dst(map: &DstMap, gamma: f64, max_steps: usize) -> Result<Self> {
        Oracle::new(dst_candidates(map, gamma, max_steps), OracleKind::Exact)
    }

    pub fn minecart(config: &MinecartConfig, frame_skip: usize, gamma: f64) -> Result<Self> {
        // ore sampling and the step limit leave the family's coverage intact
        let reference = MinecartConfig {
            ore_sampling: config.ore_sampling,
            max_episode_steps: config.max_episode_steps,
            ..MinecartConfig::default()
        };
        let kind = if *config == reference && frame_skip == 4 {
            OracleKind::PolicyFamily
        } else {
            OracleKind::LowerBound
        };
        Oracle::new(minecart_candidates(config, frame_skip, gamma)?, kind)
    }

    pub fn from_env_config(cfg: &EnvConfig) -> Result<Self> {
        cfg.validate()?;
        match cfg.kind {
            EnvKind::Dst => {
                if cfg.frame_skip() != 1 {
                    return Err(MorlError::config("env.frame_skip", "the DST oracle needs frame_skip = 1"));
                }
                Oracle::dst(&cfg.dst_map()?, cfg.gamma(), cfg.dst_max_steps())
            }
            EnvKind::Minecart => Oracle::minecart(&cfg.minecart_config(), cfg.frame_skip(), cfg.gamma()),
        }
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    pub fn num_objectives(&self) -> usize {
        self.candidates[0].value.len()
    }

    /// Index of the candidate maximizing `w · value`; ties go to the lowest index.
    pub fn best(&self, w: &[f64]) -> Result<usize> {
        MorlError::check_dim(self.num_objectives(), w.len())?;
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, c) in self.candidates.iter().enumerate() {
            let v = dot(&c.value, w);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        Ok(best)
    }

    pub fn best_candidate(&self, w: &[f64]) -> Result<&Candidate> {
        Ok(&self.candidates[self.best(w)?])
    }

    /// `max_c w · V_c`.
    pub fn optimal_value(&self, w: &[f64]) -> Result<f64> {
        let c = self.best_candidate(w)?;
        Ok(dot(&c.value, w))
    }
}

/// Optimal DST value vector and policy label for `w`.
pub fn dst_optimal_value(map: &DstMap, gamma: f64, w: &WeightVector) -> Result<(Vec<f64>, String)> {
    let oracle = Oracle::dst(map, gamma, crate::env::config::DST_DEFAULT_MAX_STEPS)?;
    let c = oracle.best_candidate(w.as_slice())?;
    Ok((c.value.clone(), c.label.clone()))
}

/// Best Minecart value vector and candidate index for `w`.
pub fn minecart_optimal_value(
    config: &MinecartConfig,
    frame_skip: usize,
    gamma: f64,
    w: &WeightVector,
) -> Result<(Vec<f64>, usize)> {
    let oracle = Oracle::minecart(config, frame_skip, gamma)?;
    let i = oracle.best(w.as_slice())?;
    Ok((oracle.candidates[i].value.clone(), i))
}

/// Simplex grid with `resolution` points per edge: all `k / (resolution - 1)`
/// compositions, in lexicographic order of the leading components.
pub fn simplex_grid(n: usize, resolution: usize) -> Result<Vec<WeightVector>> {
    if resolution < 2 {
        return Err(MorlError::InvalidArgument(format!("resolution must be >= 2, got {resolution}")));
    }
    if n == 0 {
        return Err(MorlError::InvalidArgument("need at least one objective".into()));
    }
    let steps = resolution - 1;
    let mut out = Vec::new();
    let mut counts = vec![0usize; n];
    fn fill(i: usize, left: usize, steps: usize, counts: &mut Vec<usize>, out: &mut Vec<WeightVector>) {
        let n = counts.len();
        if i == n - 1 {
            counts[i] = left;
            let w = counts.iter().map(|&c| c as f64 / steps as f64).collect();
            out.push(WeightVector::normalized(w).expect("grid point on the simplex"));
            return;
        }
        for c in (0..=left).rev() {
            counts[i] = c;
            fill(i + 1, left - c, steps, counts, out);
        }
    }
    fill(0, steps, steps, &mut counts, &mut out);
    Ok(out)
}

/// Grid points labelled with the oracle's argmax candidate.
#[derive(Clone, Debug)]
pub struct Partition {
    pub points: Vec<(WeightVector, usize)>,
}

impl Partition {
    /// Distinct candidate indices, ascending.
    pub fn regions(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.points.iter().map(|(_, id)| *id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Fraction of grid points assigned to each region, keyed by candidate index.
    pub fn shares(&self) -> Vec<(usize, f64)> {
        let n = self.points.len() as f64;
        self.regions()
            .into_iter()
            .map(|r| (r, self.points.iter().filter(|(_, id)| *id == r).count() as f64 / n))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, oracle: &Oracle, mut out: W) -> Result<()> {
        let n = oracle.num_objectives();
        let header: Vec<String> = (0..n).map(|i| format!("w_{i}")).collect();
        writeln!(out, "{},policy,label", header.join(","))?;
        for (w, id) in &self.points {
            let ws: Vec<String> = w.iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{},{id},{}", ws.join(","), oracle.candidates[*id].label)?;
        }
        Ok(())
    }
}

pub fn partition_simplex(oracle: &Oracle, resolution: usize) -> Result<Partition> {
    let points = simplex_grid(oracle.num_objectives(), resolution)?
        .into_iter()
        .map(|w| {
            let id = oracle.best(w.as_slice())?;
            Ok((w, id))
        })
        .collect::<Result<_>>()?;
    Ok(Partition { points })
}

/// `policy,label,v_0..` for every candidate.
pub fn write_candidates_csv<W: Write>(oracle: &Oracle, mut out: W) -> Result<()> {
    let n = oracle.num_objectives();
    let header: Vec<String> = (0..n).map(|i| format!("v_{i}")).collect();
    writeln!(out, "policy,label,{}", header.join(","))?;
    for (i, c) in oracle.candidates.iter().enumerate() {
        let vs: Vec<String> = c.value.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{i},{},{}", c.label, vs.join(","))?;
    }
    Ok(())
}
