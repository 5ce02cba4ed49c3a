use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use iqles::commands;
use iqles::config::RunConfig;
use iqles::io::BudgetMode;

#[derive(Parser)]
#[command(name = "iqles", version, about = "Mini-LES with numerical-dissipation budgets and IQ-driven adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the case and store grid, snapshots, final state and statistics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Start from this snapshot on the stored grid.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Replay the stored snapshots through the KE or TKE budget.
    Budget {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Evaluate all estimators the stored budgets allow.
    Estimate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Flag, refine and rerun on the adapted grid.
    Adapt {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize the stored artifacts.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ke,
    Tke,
}

fn execute(cmd: Command) -> iqles::Result<()> {
    match cmd {
        Command::Run { config, restart } => {
            let cfg = RunConfig::load(&config)?;
            let s = commands::run(&cfg, restart.as_deref())?;
            println!(
                "{} steps, dt {:.6e}, t = {:.6}, {} snapshots in {}",
                s.steps,
                s.dt,
                s.time,
                s.snapshots,
                cfg.output.dir.display()
            );
        }
        Command::Budget { config, mode } => {
            let cfg = RunConfig::load(&config)?;
            let mode = match mode {
                Mode::Ke => BudgetMode::Ke,
                Mode::Tke => BudgetMode::Tke,
            };
            let b = commands::budget(&cfg, mode)?;
            println!("{} budget over {} samples", mode.name(), b.n_samples);
        }
        Command::Estimate { config } => {
            let cfg = RunConfig::load(&config)?;
            let iq = commands::estimate(&cfg)?;
            let names: Vec<String> = iq.fields.iter().map(|f| f.id.to_string()).collect();
            println!("estimators: {}", names.join(" "));
        }
        Command::Adapt { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = commands::adapt(&cfg)?;
            print!("{}", iqles::report::render_summary(&out.report));
        }
        Command::Report { config } => {
            let cfg = RunConfig::load(&config)?;
            print!("{}", commands::report(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| execute(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
        Err(_) => ExitCode::from(2),
    }
}
