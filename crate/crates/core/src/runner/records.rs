//! Per-episode run logs and their CSV form
//! `run,episode,step,w_0..,g_0..,scalarized,optimal,regret`.

use std::io::Write;

use crate::error::{MorlError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    /// Agent steps taken by the run when the episode ended.
    pub step: u64,
    pub weight: Vec<f64>,
    /// Discounted return vector.
    pub ret: Vec<f64>,
    pub scalarized: f64,
    pub optimal: f64,
    pub regret: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
}

fn header(n: usize) -> String {
    let w: Vec<String> = (0..n).map(|i| format!("w_{i}")).collect();
    let g: Vec<String> = (0..n).map(|i| format!("g_{i}")).collect();
    format!("run,episode,step,{},{},scalarized,optimal,regret", w.join(","), g.join(","))
}

/// Writes logs with one header. Floats use the shortest representation that
/// parses back to the same bits.
pub fn write_log_csv<W: Write>(logs: &[RunLog], mut out: W) -> Result<()> {
    let n = logs
        .iter()
        .find_map(|l| l.records.first().map(|r| r.weight.len()))
        .unwrap_or(0);
    writeln!(out, "{}", header(n))?;
    for log in logs {
        for r in &log.records {
            let mut line = format!("{},{},{}", log.seed, r.episode, r.step);
            for x in r.weight.iter().chain(&r.ret).chain([&r.scalarized, &r.optimal, &r.regret]) {
                line.push(',');
                line.push_str(&x.to_string());
            }
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parses logs written by [`write_log_csv`]; runs keep their order of
/// first appearance.
pub fn read_log_csv(text: &str) -> Result<Vec<RunLog>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().ok_or_else(|| MorlError::Parse("empty log".into()))?;
    let cols: Vec<&str> = head.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with("w_")).count();
    if head != header(n) {
        return Err(MorlError::Parse(format!("unexpected log header `{head}`")));
    }
    let mut logs: Vec<RunLog> = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = |what: &str| MorlError::Parse(format!("log line {}: {what}", i + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad("wrong number of fields"));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad("bad integer"));
        let floats: Vec<f64> = fields[3..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<_>>()?;
        let seed = int(fields[0])?;
        let record = EpisodeRecord {
            episode: int(fields[1])?,
            step: int(fields[2])?,
            weight: floats[..n].to_vec(),
            ret: floats[n..2 * n].to_vec(),
            scalarized: floats[2 * n],
            optimal: floats[2 * n + 1],
            regret: floats[2 * n + 2],
        };
        match logs.iter_mut().find(|l| l.seed == seed) {
            Some(l) => l.records.push(record),
            None => logs.push(RunLog { seed, records: vec![record] }),
        }
    }
    Ok(logs)
}
