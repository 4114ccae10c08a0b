//! `second-species`: Lambert tables, collision chains and shadowing sweeps.
//!
//! Exit codes: 0 success, 2 bad input, 3 non-convergence, 4 failed certificate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{cmd_chain, cmd_lambert, cmd_shadow, load_chain, Context, Failure, Outcome};
use config::{parse_mu_list, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "second-species", version, about = "Second species periodic orbits of the planar three-body problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for sampled inputs (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated μ values (overrides the configuration).
    #[arg(long, global = true, value_name = "LIST")]
    mu_sweep: Option<String>,
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate Lambert arcs for the configured endpoint pairs.
    Lambert,
    /// Seed (or refine) a collision chain and certify it.
    Chain,
    /// Shadowing sweep for a certified chain.
    Shadow {
        /// Chain file written by `chain` (default: <out>/chain.json).
        #[arg(long)]
        chain: Option<PathBuf>,
    },
    /// lambert, chain and shadow in sequence.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(list) = &cli.mu_sweep {
        config.shadow.mu_sweep = parse_mu_list(list).map_err(Failure::input)?;
    }
    config.validate().map_err(Failure::input)?;
    Ok(config)
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("SECOND_SPECIES_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Failure::input(format!("SECOND_SPECIES_THREADS={v:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::input(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let command = match cli.command {
        Command::Lambert => "lambert",
        Command::Chain => "chain",
        Command::Shadow { .. } => "shadow",
        Command::Pipeline => "pipeline",
    };
    let config = init_threads().and_then(|_| load_config(cli)).map_err(|f| {
        let ctx = Context { config: RunConfig::default(), out: cli.out.clone(), command };
        ctx.record_without_config(f)
    })?;
    let ctx = Context { config, out: cli.out.clone(), command };
    let result = match &cli.command {
        Command::Lambert => cmd_lambert(&ctx),
        Command::Chain => cmd_chain(&ctx).map(|_| ()),
        Command::Shadow { chain } => {
            let path = chain.clone().unwrap_or_else(|| cli.out.join("chain.json"));
            load_chain(&path).and_then(|(c, cert)| cmd_shadow(&ctx, &c, &cert))
        }
        Command::Pipeline => cmd_lambert(&ctx).and_then(|_| cmd_chain(&ctx)).and_then(|(c, cert)| cmd_shadow(&ctx, &c, &cert)),
    };
    result.map_err(|f| ctx.record(f))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error ({}): {}", f.kind, f.message);
            ExitCode::from(f.exit_code)
        }
    }
}
