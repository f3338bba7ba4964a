//! Command-line front end: scenario simulation, stream analysis, curve
//! fitting and figure-reproduction presets, all with deterministic,
//! manifest-checked artifact output.

use anyhow::Context;
use clap::{Parser, Subcommand};
use rydsim_cli::config::Config;
use rydsim_cli::errors::{exit_code_for, ConfigError};
use rydsim_cli::{fit_cmd, orchestrator, presets};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "rydsim",
    version,
    about = "Photon-pair source + Rydberg-EIT memory simulator and analysis toolkit"
)]
struct Cli {
    /// Override the RNG seed of the run section / preset.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of trials per simulated point.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for trial execution (0 = all cores). Output is
    /// identical for any thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config: simulate, analyze, write artifacts + manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-analyze an existing stream CSV with a scenario config.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        stream: PathBuf,
    },
    /// Weighted least-squares fit of a data CSV (`x,y,sigma`).
    Fit {
        /// Model id (eit_spectrum, g2_vs_pw, alpha_vs_pw, storage_decay,
        /// dlcz_decay, gaussian_line, saturation).
        #[arg(long)]
        model: String,
        #[arg(long)]
        data: PathBuf,
        /// Optional problem record (initial params, fixed indices, bounds,
        /// algorithm).
        #[arg(long)]
        problem: Option<PathBuf>,
    },
    /// Reproduce a figure preset (fig2a, fig2b, fig3a, fig3b, fig4, fig5,
    /// sfig1..sfig5).
    Reproduce { figure_id: String },
    /// Parse and validate a scenario config, reporting field-level errors.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print an example configuration to stdout.
    ExampleConfig,
}

fn load_config(path: &PathBuf, cli: &Cli) -> anyhow::Result<Config> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(|e| ConfigError::new(format!("{e:#}")))?;
    let mut config = Config::from_toml(&text).map_err(|e| ConfigError::new(format!("{e:#}")))?;
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.run.n_trials = trials;
    }
    config
        .validate()
        .map_err(|e| ConfigError::new(format!("{e:#}")))?;
    Ok(config)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        // ignore the error if a pool already exists; the output does not
        // depend on the pool size
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match &cli.command {
        Command::Simulate { config } => {
            let config = load_config(config, cli)?;
            let manifest = orchestrator::run_scenario(&config, &cli.out_dir)?;
            println!(
                "wrote {} files to {} (config hash {})",
                manifest.files.len() + 1,
                cli.out_dir.display(),
                &manifest.config_hash[..12]
            );
        }
        Command::Analyze { config, stream } => {
            let config = load_config(config, cli)?;
            let manifest = orchestrator::analyze_files(&config, stream, &cli.out_dir)?;
            println!(
                "analyzed {} -> {}/estimates.csv ({} trials)",
                stream.display(),
                cli.out_dir.display(),
                manifest.n_trials
            );
        }
        Command::Fit {
            model,
            data,
            problem,
        } => {
            let manifest = fit_cmd::run_fit(model, data, problem.as_deref(), &cli.out_dir)?;
            println!(
                "fit written to {} ({} data points)",
                cli.out_dir.display(),
                manifest.n_trials
            );
        }
        Command::Reproduce { figure_id } => {
            let opts = presets::PresetOptions {
                seed: cli.seed.unwrap_or(1),
                trials: cli.trials,
            };
            let manifest = presets::reproduce(figure_id, opts, &cli.out_dir)?;
            println!(
                "preset {figure_id}: {} files in {}",
                manifest.files.len() + 1,
                cli.out_dir.display()
            );
        }
        Command::ValidateConfig { config } => {
            load_config(config, cli)?;
            println!("configuration is valid");
        }
        Command::ExampleConfig => {
            print!("{}", Config::example().to_toml()?);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}
