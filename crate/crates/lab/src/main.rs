use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sincere_lab::config::{self, Fault};
use sincere_lab::error::{EXIT_OK, EXIT_VIOLATION};
use sincere_lab::output::write_run;
use sincere_lab::{Command, LabError};

#[derive(Parser)]
#[command(name = "sincere", version, about = "Supervised contrastive loss laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML config file; every key is optional apart from schema_version.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides a config key, e.g. --set train.epochs=50. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analytic gradients against finite differences, plus attraction-factor ranges.
    Gradcheck {
        /// Test hook: negate the analytic gradients.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Closed-form posteriors against exhaustive enumeration.
    Oracle,
    /// Monte Carlo ideal losses against the symmetrized-KL bounds.
    Bound,
    /// Train on synthetic data; writes embeddings, loss curve and metrics.
    Train,
    /// Margin, histograms and weighted kNN for saved embeddings.
    Eval {
        /// Output directory of a train run.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Compare two or more train runs.
    Report {
        /// Output directory of a train run. Repeatable.
        #[arg(long = "run")]
        runs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<i32, LabError> {
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let mut cfg = config::load(cli.config.as_deref(), &overrides)?;
    let command = match cli.command {
        Cmd::Gradcheck { inject_fault } => {
            if inject_fault {
                cfg.gradcheck.fault = Fault::FlipSign;
            }
            Command::Gradcheck
        }
        Cmd::Oracle => Command::Oracle,
        Cmd::Bound => Command::Bound,
        Cmd::Train => Command::Train,
        Cmd::Eval { run } => {
            if run.is_some() {
                cfg.eval.run = run;
            }
            Command::Eval
        }
        Cmd::Report { runs } => {
            cfg.report.runs.extend(runs);
            Command::Report
        }
    };
    let out = cli.out.unwrap_or_else(|| PathBuf::from("runs").join(command.name()));
    let start = Instant::now();
    let output = command.execute(&cfg)?;
    write_run(&out, command.name(), &cfg, &output, start.elapsed().as_secs_f64())?;
    println!("{}", output.summary);
    println!("wrote {}", out.display());
    if output.passed {
        Ok(EXIT_OK)
    } else {
        eprintln!("{}: check failed", command.name());
        Ok(EXIT_VIOLATION)
    }
}
