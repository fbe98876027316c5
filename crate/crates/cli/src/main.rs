use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use bdl::beamspace::power_leakage_worst_ula;
use bdl::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "bdl", version, about = "Learned-dictionary beamspace channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the channel-representation and precoding dictionaries.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configured Monte-Carlo sweep and write CSV plus gnuplot script.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the worst-case single-path power leakage of an N-element ULA.
    Leakage {
        #[arg(long)]
        n: usize,
    },
    /// Compare DFT and learned representation quality on held-out channels.
    ReprCompare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config } => {
            let cfg = load_config(&config, None)?;
            let start = Instant::now();
            let (report, files) = harness::train_dictionaries(&cfg)?;
            for (name, curve) in &report.residual_curves {
                if let Some(last) = curve.last() {
                    eprintln!("{name}: {} iterations, final residual {last:.6}", curve.len());
                }
            }
            for f in files {
                println!("{}", f.display());
            }
            eprintln!("trained in {:.1?}", start.elapsed());
        }
        Command::Run { config, out } => {
            let cfg = load_config(&config, out)?;
            let start = Instant::now();
            let table = harness::run_experiment(&cfg)?;
            let csv = table.write(&cfg.output_dir, &cfg.name)?;
            println!("{}", csv.display());
            eprintln!("{} rows in {:.1?}", table.rows.len(), start.elapsed());
        }
        Command::Leakage { n } => {
            println!("{:.6}", power_leakage_worst_ula(n)?);
        }
        Command::ReprCompare { config, out } => {
            let cfg = load_config(&config, out)?;
            let dicts = harness::load_dictionaries(&cfg)?;
            let table = harness::repr_compare(&cfg, &dicts)?;
            let csv = table.write(&cfg.output_dir, &format!("{}_repr", cfg.name))?;
            println!("{}", csv.display());
        }
    }
    Ok(())
}
