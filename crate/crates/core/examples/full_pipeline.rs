//! Run every stage from a TOML config into a directory, the same way the
//! `hemix` binary does.
//!
//! cargo run --release --example full_pipeline -- examples/run.toml out

use hemix::cli::dispatch;
use hemix::RunConfig;

fn main() -> hemix::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let mut cfg = match args.next() {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = args.next() {
        cfg.paths.out_dir = out.into();
    }
    println!("config hash {}", cfg.hash()?);

    for stage in dispatch(&cfg, "all")? {
        for a in &stage.artifacts {
            println!("{}\t{}", stage.stage, a.display());
        }
    }
    Ok(())
}
