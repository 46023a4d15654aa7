use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hemix::cli::{dispatch, exit_code};
use hemix::config::{RunConfig, Seeds};

#[derive(Parser)]
#[command(name = "hemix", version, about = "Mixing-enthalpy regression pipeline")]
struct Args {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides paths.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sets every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write dataset CSVs and manifests.
    GenData,
    /// Grid-search every kernel family.
    KrrScan,
    /// Refit the best kernels, emit scatter data and cross-validate.
    KrrFit,
    /// Feature expansion, LASSO path and best-subset formulas.
    Sparsify,
    /// Consolidate artifacts and emit plot data.
    Report,
    /// All stages in order.
    All,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn run(args: Args) -> hemix::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = args.out {
        cfg.paths.out_dir = o;
    }
    if let Some(s) = args.seed {
        cfg.seeds = Seeds::all(s);
    }
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(hemix::Error::Config { field: "--threads".into(), msg: "must be at least 1".into() });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| hemix::Error::InvalidInput(e.to_string()))?;
    }
    let stage = match args.command {
        Command::GenData => "gen-data",
        Command::KrrScan => "krr-scan",
        Command::KrrFit => "krr-fit",
        Command::Sparsify => "sparsify",
        Command::Report => "report",
        Command::All => "all",
        Command::ShowConfig => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
            println!("# hash {}", cfg.hash()?);
            return Ok(());
        }
    };
    for out in dispatch(&cfg, stage)? {
        for a in &out.artifacts {
            println!("{}\t{}", out.stage, a.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let r = run(Args::parse());
    if let Err(e) = &r {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&r) as u8)
}
