use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use clubconv::{AnalysisConfig, CliError, RawConfig};

#[derive(Parser)]
#[command(name = "clubconv", version, about = "Convergence-club analysis of panel indicators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Smoothing {
    None,
    Hp,
}

#[derive(Subcommand)]
enum Command {
    /// Run the recipe described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// overall, target_ratio, sector, probit or montecarlo
        #[arg(long)]
        recipe: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        smoothing: Option<Smoothing>,
        /// Trimming fraction of the log-t regression.
        #[arg(long)]
        r: Option<f64>,
        /// One-sided critical value.
        #[arg(long, allow_hyphen_values = true)]
        crit: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(CliError::io(p))
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        recipe,
        out,
        smoothing,
        r,
        crit,
        seed,
    } = Cli::parse().command;

    let result = (|| -> Result<(), CliError> {
        let mut raw = RawConfig::load(&config)?;
        if let Some(v) = recipe {
            raw.set("recipe", &v)?;
        }
        if let Some(v) = out {
            raw.set("out", &absolute(&v)?.to_string_lossy())?;
        }
        if let Some(v) = smoothing {
            raw.set("smoothing", if matches!(v, Smoothing::Hp) { "hp" } else { "none" })?;
        }
        if let Some(v) = r {
            raw.set("r", &v.to_string())?;
        }
        if let Some(v) = crit {
            raw.set("crit", &v.to_string())?;
        }
        if let Some(v) = seed {
            raw.set("seed", &v.to_string())?;
        }
        let base = config.parent().unwrap_or(Path::new("."));
        let cfg = AnalysisConfig::from_raw(&raw, base)?;
        clubconv::execute(&cfg)?;
        println!("wrote {}", cfg.out.join("report.json").display());
        Ok(())
    })();

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::FAILURE
        }
    }
}
