//! Smoothing and cross-run aggregation of regret logs.

use super::records::RunLog;
use crate::error::{MorlError, Result};

/// Trailing moving average; the first `window - 1` entries average what is
/// available.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        let count = (i + 1).min(window);
        out.push(if count == 1 { xs[i] } else { sum / count as f64 });
    }
    out
}

/// Per-step regret: step `t` (0-based) carries the regret of the episode
/// running at that step. Steps after the last finished episode are dropped.
pub fn step_series(log: &RunLog) -> Vec<f64> {
    let mut out = Vec::new();
    for r in &log.records {
        while (out.len() as u64) < r.step {
            out.push(r.regret);
        }
    }
    out
}

/// Cumulative regret after each step: the sum over episodes finished by then.
fn cumulative_series(log: &RunLog) -> Vec<f64> {
    let mut out = Vec::new();
    let mut total = 0.0;
    for r in &log.records {
        while (out.len() as u64) + 1 < r.step {
            out.push(total);
        }
        total += r.regret;
        out.push(total);
    }
    out
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation across runs, sampled every
/// `stride` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub steps: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub cumulative_mean: Vec<f64>,
    pub cumulative_std: Vec<f64>,
}

impl Aggregate {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,mean_regret,std_regret,cumulative_mean,cumulative_std\n");
        for i in 0..self.steps.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.steps[i], self.mean[i], self.std[i], self.cumulative_mean[i], self.cumulative_std[i]
            ));
        }
        s
    }
}

/// Smooths each run's per-step regret over `window` steps, then averages
/// across runs on the steps every run covers.
pub fn aggregate(logs: &[RunLog], window: usize, stride: usize) -> Result<Aggregate> {
    if logs.is_empty() {
        return Err(MorlError::InvalidArgument("no logs to aggregate".into()));
    }
    let stride = stride.max(1);
    let smoothed: Vec<Vec<f64>> = logs.iter().map(|l| moving_average(&step_series(l), window)).collect();
    let cumulative: Vec<Vec<f64>> = logs.iter().map(cumulative_series).collect();
    let len = smoothed.iter().map(Vec::len).min().unwrap_or(0);
    let mut agg = Aggregate {
        steps: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
        cumulative_mean: Vec::new(),
        cumulative_std: Vec::new(),
    };
    let mut t = stride.min(len.max(1)) - 1;
    while t < len {
        let (m, s) = mean_std(&smoothed.iter().map(|v| v[t]).collect::<Vec<_>>());
        let (cm, cs) = mean_std(&cumulative.iter().map(|v| v[t]).collect::<Vec<_>>());
        agg.steps.push((t + 1) as f64);
        agg.mean.push(m);
        agg.std.push(s);
        agg.cumulative_mean.push(cm);
        agg.cumulative_std.push(cs);
        t += stride;
    }
    Ok(agg)
}

/// Mean episodic regret across runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegretSummary {
    pub runs: usize,
    /// Mean over runs of each run's mean episodic regret.
    pub mean: f64,
    /// Population standard deviation of the per-run means.
    pub std: f64,
}

/// Per-run mean regret of the episodes ending after step `after`, then mean
/// and spread across runs. Runs without such episodes are skipped.
pub fn mean_regret(logs: &[RunLog], after: u64) -> Result<RegretSummary> {
    let per_run: Vec<f64> = logs
        .iter()
        .filter_map(|l| {
            let tail: Vec<f64> = l.records.iter().filter(|r| r.step > after).map(|r| r.regret).collect();
            (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
        })
        .collect();
    if per_run.is_empty() {
        return Ok(RegretSummary { runs: 0, mean: f64::NAN, std: f64::NAN });
    }
    let (mean, std) = mean_std(&per_run);
    Ok(RegretSummary { runs: per_run.len(), mean, std })
}
