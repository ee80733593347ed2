use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kickwalk::io::{plan, sweep, Overrides};

/// Monte-Carlo quantum walk of a kicked two-level atom with spontaneous emission.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Cli {
    /// Run configuration (TOML with [physics], [walk], [se], [ensemble], [output]).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Figure preset: fig3, fig3a-d, fig4, fig4_<ratio>_<p>, fig5, fig5a-d or custom.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trajectories: Option<usize>,
    /// Output root; defaults to the file's [output] dir, then $KICKWALK_OUT, then ./results.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.config.is_none() && cli.preset.is_none() {
        eprintln!("error: give --config, --preset or both");
        return ExitCode::from(2);
    }
    let overrides = Overrides {
        seed: cli.seed,
        trajectories: cli.trajectories,
        out: cli.out,
        threads: cli.threads,
    };
    let runs = match plan(cli.preset.as_deref(), cli.config.as_deref(), &overrides) {
        Ok(runs) => runs,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let mut worst = 0;
    for outcome in sweep(&runs) {
        match outcome.result {
            Ok((result, paths)) => println!(
                "{}: {} trajectories in {:.2}s, {} events -> {}",
                outcome.label,
                result.metadata.trajectories,
                result.elapsed.as_secs_f64(),
                result.total_events(),
                paths.dir.display()
            ),
            Err(e) => {
                eprintln!("{}: error: {e}", outcome.label);
                worst = worst.max(e.exit_code());
            }
        }
    }
    ExitCode::from(worst as u8)
}
