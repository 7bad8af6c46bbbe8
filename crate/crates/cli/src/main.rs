use std::path::PathBuf;
use std::process::ExitCode;

use cavsim_cli::{parse_config_as, run_experiment, ConfigError, Kind, RunError};
use clap::Parser;

/// Multispecies cavity selforganisation: simulations and analytic predictions.
#[derive(Parser)]
#[command(name = "cavsim", version)]
struct Args {
    /// simulate | ensemble | threshold | equilibrium | heatflow | sweep
    /// (replaces `kind` in the config)
    kind: String,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realisations: Option<usize>,
    /// Worker threads for ensembles and sweeps.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(args: &Args) -> Result<(), RunError> {
    let kind: Kind = args
        .kind
        .parse()
        .map_err(|m| ConfigError::Invalid(vec![m]))?;
    let text = std::fs::read_to_string(&args.config).map_err(|source| RunError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut config = parse_config_as(&text, Some(kind))?;
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    if let Some(seed) = args.seed {
        config.sim.seed = Some(seed);
    }
    if let Some(n) = args.realisations {
        if n < 1 || (kind == Kind::Simulate && n != 1) {
            return Err(ConfigError::Invalid(vec![format!("--realisations: {n} is not allowed for {kind}")]).into());
        }
        config.realisations = n;
    }
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| ConfigError::Invalid(vec![format!("--threads: {e}")]))?;
    }
    let report = run_experiment(&config)?;
    for file in &report.files {
        println!("{}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cavsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
