use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use mwtomo::config::RunConfig;
use mwtomo::digest::sha256_hex;
use mwtomo::pipeline::{
    cmd_contaminate, cmd_enhance, cmd_forward, cmd_invert, cmd_pipeline, validation_checks, Experiment,
};

#[derive(Parser)]
#[command(name = "mwtomo", version, about = "2D microwave tomography: synthesize, contaminate, invert, enhance")]
struct Cli {
    /// TOML config laid over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize clean data on the fine mesh.
    Forward {
        /// Output dataset file.
        #[arg(long, value_name = "FILE", default_value = "data_clean.txt")]
        out: PathBuf,
    },
    /// Add calibrated Gaussian noise to a clean dataset.
    Contaminate {
        dataset: PathBuf,
        #[arg(long)]
        percent: f64,
        /// Defaults to the config's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Reconstruct the permittivity on the coarse mesh.
    Invert {
        dataset: PathBuf,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Render raw and enhanced images of a reconstruction.
    Enhance {
        reconstruction: PathBuf,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Run the whole experiment into a fresh run directory.
    Pipeline {
        /// Parent directory for the run (defaults to the config's output directory).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated noise percentages, e.g. `1,2,5,10`.
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        percent: Option<Vec<f64>>,
    },
    /// Check the solver against the series solution and the Jacobian
    /// against finite differences.
    Validate,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Forward { out } => {
            let exp = Experiment::new(config)?;
            let set = cmd_forward(&exp, &out)?;
            let bytes = std::fs::read(&out).with_context(|| format!("reading back {}", out.display()))?;
            println!("records {}", set.values.len());
            println!("geometry_digest {}", set.geometry_digest());
            println!("sha256 {}", sha256_hex(&bytes));
        }
        Command::Contaminate {
            dataset,
            percent,
            seed,
            out,
        } => {
            let seed = seed.unwrap_or(config.noise.seed);
            let set = cmd_contaminate(&dataset, percent, seed, &out)?;
            println!("wrote {} ({}% noise, seed {seed})", out.display(), set.noise_percent);
        }
        Command::Invert { dataset, out } => {
            let exp = Experiment::new(config)?;
            let inv = cmd_invert(&exp, &dataset, &out)?;
            println!(
                "status {} iterations {} residual {:e}",
                inv.status.as_str(),
                inv.iterations,
                inv.final_residual
            );
            println!("reconstruction {}", inv.reconstruction.display());
        }
        Command::Enhance { reconstruction, out } => {
            for p in cmd_enhance(&config, &reconstruction, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Pipeline { out, seed, percent } => {
            if let Some(s) = seed {
                config.noise.seed = s;
            }
            if let Some(p) = percent {
                config.noise.percents = p;
            }
            config.validate()?;
            let exp = Experiment::new(config)?;
            let parent = out.unwrap_or_else(|| PathBuf::from(&exp.config.output.directory));
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
            let run_dir = parent.join(format!("run-{}-{stamp}", &exp.config_digest[..12]));
            if run_dir.exists() {
                bail!("run directory {} already exists", run_dir.display());
            }
            info!("writing to {}", run_dir.display());
            let report = cmd_pipeline(&exp, &run_dir)?;
            println!("run {}", run_dir.display());
            println!("{:>8} {:>15} {:>10} {:>12} {:>10}", "percent", "status", "iterations", "residual", "rms_error");
            for b in &report.branches {
                println!(
                    "{:>8} {:>15} {:>10} {:>12} {:>10}",
                    b.percent,
                    b.status,
                    b.iterations.map_or("-".into(), |v| v.to_string()),
                    b.final_residual.map_or("-".into(), |v| format!("{v:.3e}")),
                    b.rms_error.map_or("-".into(), |v| format!("{v:.3}")),
                );
                if let Some(e) = &b.error {
                    println!("         error: {e}");
                }
            }
            if let Some(note) = &report.note {
                println!("{note}");
            }
            if !report.succeeded() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Validate => {
            let mut ok = true;
            for c in validation_checks()? {
                println!(
                    "{} {}: {:.3e} (tolerance {:.0e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance
                );
                ok &= c.passed;
            }
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
