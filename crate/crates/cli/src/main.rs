//! `sdid`: batch front end for panel estimation, inference, selection
//! regressions and margin simulation.
//!
//! Exit codes: 0 success, 1 output failure, 2 config error, 3 data error,
//! 4 numerical failure. Failures print a JSON report on stderr.

mod config;
mod error;
mod jobs;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Loaded, Overrides};
use error::CliResult;
use jobs::Runner;

#[derive(Parser, Debug)]
#[command(name = "sdid", version, about = "Synthetic difference-in-differences batch runner")]
struct Cli {
    /// Job configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides every seed in the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory (overrides `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads; 0 picks automatically. Never changes results.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Load every input and check the config against it.
    Validate,
    /// Estimator matrix on the panel.
    Estimate,
    /// Block-bootstrap standard errors.
    Bootstrap,
    /// Backdated placebo estimates.
    Placebo,
    /// Estimates on each configured subgroup.
    Subgroup,
    /// Fixed-effects selection regression.
    Selection,
    /// Counterfactual state-margin simulation.
    Simulate,
    /// Long-format trend series for plotting.
    ExportFigures,
    /// Every job the config describes.
    Run,
}

fn execute(cli: &Cli) -> CliResult<Vec<String>> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| error::CliError::config("--config PATH is required"))?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        threads: cli.threads,
    };
    let loaded = Loaded::read(path, &overrides)?;
    let mut runner = Runner::new(loaded);
    match cli.command {
        Command::Validate => return Ok(vec![runner.validate()?]),
        Command::Estimate => runner.estimate()?,
        Command::Bootstrap => runner.bootstrap()?,
        Command::Placebo => runner.placebo()?,
        Command::Subgroup => runner.subgroup()?,
        Command::Selection => runner.selection()?,
        Command::Simulate => runner.simulate()?,
        Command::ExportFigures => runner.export_figures()?,
        Command::Run => runner.run_all()?,
    }
    Ok(runner.written.iter().map(|p| format!("wrote {}", p.display())).collect())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
        }
        Err(e) => {
            eprintln!("{}", e.report());
            std::process::exit(e.exit_code);
        }
    }
}
