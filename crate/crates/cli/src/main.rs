use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use respectra::Error;
use respectra_cli::{configure_threads, exit_code, run, Command, RunConfig};

/// Complex spectral decompositions of unstable levels.
#[derive(Parser, Debug)]
#[command(name = "respectra", version)]
struct Args {
    /// Command to run; must agree with the config's `command` if both are given.
    command: Option<Command>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Contour node count.
    #[arg(long)]
    nodes: Option<usize>,
    /// Pole-solver tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Seed for randomized invariant sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the contour nodes and weights to grid.csv.
    #[arg(long)]
    dump_grid: bool,
}

fn assemble(args: Args) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::for_command(
            args.command.ok_or_else(|| Error::Config("give a command or --config".into()))?,
        ),
    };
    if let Some(c) = args.command {
        if c != cfg.command {
            return Err(Error::Config(format!("command {c:?} conflicts with the config's {:?}", cfg.command)));
        }
    }
    cfg.output = args.out.or(cfg.output);
    cfg.nodes = args.nodes.or(cfg.nodes);
    cfg.tolerance = args.tolerance.or(cfg.tolerance);
    cfg.seed = args.seed.or(cfg.seed);
    cfg.dump_grid |= args.dump_grid;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let prepared = configure_threads(std::env::var("RESPECTRA_THREADS").ok().as_deref()).and_then(|()| assemble(args));
    let cfg = match prepared {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let report = run(&cfg);
    print!("{}", report.stdout);
    for f in &report.files {
        eprintln!("wrote {}", f.display());
    }
    ExitCode::from(report.exit as u8)
}
