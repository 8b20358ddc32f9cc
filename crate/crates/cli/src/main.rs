use std::path::PathBuf;
use std::process::ExitCode;

use chirpmod_cli::commands;
use chirpmod_cli::{preset, CliError, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chirpmod", version, about = "Chirp-modulated DFT-s-OFDM link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo BER sweep, one CSV per curve.
    Simulate(Common),
    /// Pairwise-error BER upper bound and diversity order.
    Bound(Common),
    /// Worst-case PAPR per chirp index.
    Papr(Common),
    /// Largest chirp modulation order without ambiguity.
    OptimizeP(Common),
    /// Print a preset configuration.
    Preset { name: String },
}

#[derive(Args)]
struct Common {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (default: `output.dir` of the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    max_trials: Option<u64>,
    #[arg(long)]
    min_errors: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(CliError::Config("either --config or --preset is required".into())),
        };
        if let Some(seed) = self.seed {
            cfg.sweep.seed = seed;
        }
        if let Some(n) = self.max_trials {
            cfg.sweep.max_trials = n;
        }
        if let Some(n) = self.min_errors {
            cfg.sweep.min_errors = n;
        }
        if let Some(threads) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = c.load()?;
            for path in commands::write_simulation(&cfg, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Bound(c) => {
            let (cfg, out) = c.load()?;
            let skipped = cfg.curves()?.iter().filter(|c| c.config.users != 1).count();
            if skipped > 0 {
                eprintln!("note: {skipped} multi-user curve(s) skipped, the bound is single-user");
            }
            for o in commands::write_bound(&cfg, &out)? {
                print!("{}", o.report);
            }
        }
        Command::Papr(c) => {
            let (cfg, out) = c.load()?;
            print!("{}", commands::write_papr(&cfg, &out)?);
        }
        Command::OptimizeP(c) => {
            let (cfg, out) = c.load()?;
            print!("{}", commands::write_optimize_p(&cfg, &out)?);
        }
        Command::Preset { name } => print!("{}", preset(&name)?.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
