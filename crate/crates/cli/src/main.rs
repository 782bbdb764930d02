use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use impulse_lorenz_cli::{report, run, ReportFormat, RunOptions};

#[derive(Parser)]
#[command(name = "impulse-lorenz", version, about = "Lorenz flow under impulsive random forcing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long, env = "IMPULSE_LORENZ_THREADS")]
        threads: Option<usize>,
    },
    /// Re-render the stored results of a run.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        format: ReportFormat,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed_override, threads } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: thread pool: {e}");
                    return ExitCode::from(1);
                }
            }
            run(&config, &RunOptions { out, seed_override }).map(|(dir, summary)| {
                for line in summary {
                    println!("{line}");
                }
                println!("wrote {}", dir.display());
            })
        }
        Command::Report { run_dir, format } => report(&run_dir, format).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
