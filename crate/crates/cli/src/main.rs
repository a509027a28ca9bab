use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use morl_core::env::EnvConfig;
use morl_core::oracle::{partition_simplex, write_candidates_csv, Oracle};
use morl_core::runner::{self, ExperimentConfig, RunLog};
use morl_core::{MorlError, WeightVector};

#[derive(Parser)]
#[command(name = "morl", version, about = "Dynamic-weights multi-objective RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent per seed and write logs, curves and plots.
    Run {
        config: PathBuf,
        /// Comma-separated seeds, replacing `run.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory (default: `runs/<config name>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute curves and summary from the `run_*.csv` logs in a directory.
    Aggregate {
        dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        window: usize,
        #[arg(long, default_value_t = 100)]
        stride: usize,
        #[arg(long, default_value_t = 10_000)]
        last_steps: u64,
    },
    /// Label a simplex grid with the oracle's optimal policy.
    Partition {
        env_config: PathBuf,
        /// Grid points per simplex edge.
        #[arg(long, default_value_t = 20)]
        resolution: usize,
        /// CSV destination (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write an SVG scatter of the partition.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Optimal policy and value for one weight vector.
    Oracle {
        env_config: PathBuf,
        /// Comma-separated weight vector.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        w: Vec<f64>,
        /// Also list every candidate policy as CSV.
        #[arg(long)]
        candidates: bool,
    },
}

fn load_env(path: &Path) -> anyhow::Result<EnvConfig> {
    EnvConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(config: &Path, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(seeds) = seeds {
        cfg.run.seeds = seeds;
    }
    cfg.validate()?;
    let out = out.unwrap_or_else(|| {
        let stem = config.file_stem().map_or("experiment".into(), |s| s.to_string_lossy().into_owned());
        Path::new("runs").join(stem)
    });
    log::info!(
        "{} agent on {:?}, {} steps x {} seeds",
        cfg.agent.algorithm.name(),
        cfg.env.kind,
        cfg.run.steps,
        cfg.run.seeds.len()
    );
    let outputs = runner::run_experiment(&cfg)?;
    runner::write_outputs(&cfg, &outputs, &out)?;
    let logs: Vec<RunLog> = outputs.into_iter().map(|o| o.log).collect();
    print_summary(&logs, cfg.run.last_steps)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn print_summary(logs: &[RunLog], last_steps: u64) -> anyhow::Result<()> {
    let overall = runner::mean_regret(logs, 0)?;
    let horizon = logs.iter().filter_map(|l| l.records.last().map(|r| r.step)).min().unwrap_or(0);
    let tail = runner::mean_regret(logs, horizon.saturating_sub(last_steps))?;
    println!("mean episodic regret: {:.5} ± {:.5} over {} runs", overall.mean, overall.std, overall.runs);
    println!("last {last_steps} steps: {:.5} ± {:.5}", tail.mean, tail.std);
    Ok(())
}

fn aggregate(dir: &Path, window: usize, stride: usize, last_steps: u64) -> anyhow::Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no run_*.csv logs in {}", dir.display());
    }
    let mut logs = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f)?;
        logs.extend(runner::read_log_csv(&text).with_context(|| format!("parsing {}", f.display()))?);
    }
    runner::write_summary(&logs, window, stride, last_steps, dir)?;
    print_summary(&logs, last_steps)?;
    println!("aggregated {} runs into {}", logs.len(), dir.display());
    Ok(())
}

fn partition(env_config: &Path, resolution: usize, out: Option<PathBuf>, svg: Option<PathBuf>) -> anyhow::Result<()> {
    let env = load_env(env_config)?;
    let oracle = Oracle::from_env_config(&env)?;
    if resolution < 2 {
        return Err(MorlError::config("resolution", "must be >= 2").into());
    }
    let part = partition_simplex(&oracle, resolution)?;
    match &out {
        Some(path) => part.write_csv(&oracle, std::io::BufWriter::new(std::fs::File::create(path)?))?,
        None => part.write_csv(&oracle, std::io::stdout().lock())?,
    }
    if let Some(path) = svg {
        let labels: Vec<String> = oracle.candidates().iter().map(|c| c.label.clone()).collect();
        let points: Vec<(Vec<f64>, usize)> = part.points.iter().map(|(w, id)| (w.as_slice().to_vec(), *id)).collect();
        std::fs::write(path, runner::svg::partition_scatter(&points, &labels))?;
    }
    let shares = part.shares();
    eprintln!("{} regions ({} oracle)", shares.len(), oracle.kind().name());
    for (id, share) in shares {
        eprintln!("  {:5.1}%  {}", 100.0 * share, oracle.candidates()[id].label);
    }
    Ok(())
}

fn oracle(env_config: &Path, w: Vec<f64>, candidates: bool) -> anyhow::Result<()> {
    let env = load_env(env_config)?;
    let oracle = Oracle::from_env_config(&env)?;
    if w.len() != oracle.num_objectives() {
        return Err(MorlError::config("w", format!("expected {} components, got {}", oracle.num_objectives(), w.len())).into());
    }
    let w = WeightVector::new(w).map_err(|e| MorlError::config("w", e.to_string()))?;
    let best = oracle.best_candidate(w.as_slice())?;
    println!("oracle: {}", oracle.kind().name());
    println!("policy: {}", best.label);
    println!("value: {:?}", best.value);
    println!("scalarized: {}", oracle.optimal_value(w.as_slice())?);
    if candidates {
        write_candidates_csv(&oracle, std::io::stdout().lock())?;
    }
    Ok(())
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<MorlError>(),
            Some(MorlError::Config { .. } | MorlError::Parse(_) | MorlError::InvalidWeight(_))
        )
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seeds, out } => run(&config, seeds, out),
        Command::Aggregate {
            dir,
            window,
            stride,
            last_steps,
        } => aggregate(&dir, window, stride, last_steps),
        Command::Partition {
            env_config,
            resolution,
            out,
            svg,
        } => partition(&env_config, resolution, out, svg),
        Command::Oracle { env_config, w, candidates } => oracle(&env_config, w, candidates),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
