use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use locallaw_core::harness::config::{parse_config, ExperimentConfig, ExperimentKind};
use locallaw_core::harness::{report, run_experiment, ExitStatus, RunError};
use log::{error, info};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "locallaw-lab", version, about = "Monte Carlo checks of the local semicircle law")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "LOCALLAW_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Configuration whose output directory holds the results.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the summary and plot data; also read when no inputs are given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Criterion ids to judge (default: all).
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<String>,
    /// Result files or directories to summarize.
    inputs: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact identities and oracle comparisons.
    Identities(Common),
    /// Entry moments and the global spectral distribution.
    Moments(Common),
    /// Conditional-expectation concentration and event-conditioned bounds.
    Concentration(Common),
    /// Self-consistent equation residual and stability constant.
    SelfConsistent(Common),
    /// Stochastic-domination tail tables.
    Domination(Common),
    /// Propagation inequality and the multi-scale ladder.
    Bootstrap(Common),
    /// Resolvent error scaling along an N-ladder.
    LocalLaw(Common),
    /// Judge saved results against the acceptance criteria.
    Report(ReportArgs),
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

fn load(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig, RunError> {
    let mut cfg = parse_config(&common.config)?;
    if cfg.kind != kind {
        info!("config kind {} replaced by subcommand {kind}", cfg.kind);
        cfg.kind = kind;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(locallaw_core::harness::ConfigError::Invalid(v).into());
    }
    Ok(cfg)
}

fn run(kind: ExperimentKind, common: &Common) -> Result<ExitStatus, RunError> {
    let cfg = load(kind, common)?;
    info!(
        "locallaw-lab {} ({kind}), config sha256 {}, seed {}, threads {:?}",
        env!("CARGO_PKG_VERSION"),
        config_hash(&cfg),
        cfg.seed,
        cfg.threads
    );
    let outcome = run_experiment(&cfg)?;
    for v in &outcome.verdicts {
        println!("{v}");
    }
    println!("results: {}", outcome.output.display());
    Ok(outcome.status)
}

fn run_report(args: &ReportArgs) -> Result<ExitStatus, RunError> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::minimal(ExperimentKind::Report, vec![64], 0),
    };
    cfg.kind = ExperimentKind::Report;
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if !args.criteria.is_empty() {
        cfg.criteria = args.criteria.clone();
    }
    info!("locallaw-lab {} (report), output {}", env!("CARGO_PKG_VERSION"), cfg.output.display());
    let summary = if args.inputs.is_empty() {
        run_experiment(&cfg)?.summary.expect("report runs produce a summary")
    } else {
        std::fs::create_dir_all(&cfg.output).map_err(|source| RunError::Io {
            path: cfg.output.clone(),
            source,
        })?;
        let s = report::summarize(&args.inputs, &cfg.criteria, Some(&cfg.output))?;
        let path = cfg.output.join("summary.json");
        std::fs::write(&path, report::to_json(&s)).map_err(|source| RunError::Io { path, source })?;
        s
    };
    for v in &summary.criteria {
        println!("{v}");
    }
    for s in &summary.slopes {
        println!("slope {} {} E={}: {:.4}", s.experiment, s.metric, s.energy, s.fit.slope);
    }
    for c in &summary.constants {
        println!("constant {}: {:.4} (ceiling {})", c.name, c.value, c.ceiling);
    }
    for p in &summary.truncated {
        println!("warning: {} ends with an incomplete line", p.display());
    }
    Ok(if summary.all_pass() {
        ExitStatus::Pass
    } else {
        ExitStatus::VerdictFailed
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    let result = match &cli.command {
        Command::Identities(c) => run(ExperimentKind::Identities, c),
        Command::Moments(c) => run(ExperimentKind::Moments, c),
        Command::Concentration(c) => run(ExperimentKind::Concentration, c),
        Command::SelfConsistent(c) => run(ExperimentKind::SelfConsistent, c),
        Command::Domination(c) => run(ExperimentKind::Domination, c),
        Command::Bootstrap(c) => run(ExperimentKind::Bootstrap, c),
        Command::LocalLaw(c) => run(ExperimentKind::LocalLaw, c),
        Command::Report(a) => run_report(a),
    };
    let status = result.unwrap_or_else(|e| {
        error!("{e}");
        e.exit_status()
    });
    info!("wall time {:.2?}, exit {}", start.elapsed(), status.code());
    ExitCode::from(status.code() as u8)
}
