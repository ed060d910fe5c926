use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use bitb::{exit, ExperimentConfig, UsageError};

/// Runs one experiment suite and writes summary.json, metrics.json and CSV
/// tables to the output directory. Flags override values from --config.
#[derive(Parser, Debug)]
#[command(name = "bitb", version)]
struct Cli {
    /// Key-value configuration file (keys: suite, depth, dims, seed, weights,
    /// kernel, r, delta, trials, out).
    #[arg(long)]
    config: Option<PathBuf>,
    /// properties | paraproducts | atoms | hardy | goodness | decay | wbp | expansion | tbprobe
    #[arg(long)]
    suite: Option<String>,
    /// Depths per axis, e.g. 4x4 (each at most 8).
    #[arg(long)]
    depth: Option<String>,
    /// Coordinate dimension per axis, e.g. 1x1.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// `one` or `random:c0,B`.
    #[arg(long)]
    weights: Option<String>,
    /// product_hilbert | bicommutator | zero
    #[arg(long)]
    kernel: Option<String>,
    /// Goodness parameter r.
    #[arg(long)]
    r: Option<String>,
    /// Hölder exponent used by the goodness parameters.
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Print the resolved configuration in file form and exit.
    #[arg(long)]
    emit_config: bool,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, UsageError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::parse_file(path)?,
        None => ExperimentConfig::default(),
    };
    for (key, value) in [
        ("suite", &cli.suite),
        ("depth", &cli.depth),
        ("dims", &cli.dims),
        ("seed", &cli.seed),
        ("weights", &cli.weights),
        ("kernel", &cli.kernel),
        ("r", &cli.r),
        ("delta", &cli.delta),
        ("trials", &cli.trials),
        ("out", &cli.out),
    ] {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("usage error: {e}");
            return ExitCode::from(exit::USAGE as u8);
        }
    };
    if cli.emit_config {
        print!("{}", cfg.emit());
        return ExitCode::from(exit::OK as u8);
    }
    match bitb::run(&cfg) {
        Ok(rep) => {
            for inv in &rep.invariants {
                println!("{} {}: {}", if inv.passed { "PASS" } else { "FAIL" }, inv.name, inv.detail);
            }
            println!("report written to {}", cfg.out.display());
            let code = if rep.passed() { exit::OK } else { exit::INVARIANT_FAILED };
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
