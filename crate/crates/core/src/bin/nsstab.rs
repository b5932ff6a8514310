use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nsstab::cli::{exit_code, hint, run, Stage, EXIT_CONFIG};
use nsstab::config::ExperimentConfig;
use nsstab::plot::{emit_plot, PlotKind};

#[derive(Parser)]
#[command(
    name = "nsstab",
    version,
    about = "Localized feedback stabilization experiments for a truncated 2D Navier-Stokes model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// output directory; overrides the config's `output`
    #[arg(long)]
    out: Option<PathBuf>,
    /// overrides the config's `seed`
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Reference flow summary and norms
    Reference(RunArgs),
    /// Observability constants D(M) for the configured M list
    Observability(RunArgs),
    /// Minimum-norm null control on one interval, with KKT checks
    NullControl(RunArgs),
    /// Piecewise open-loop stabilization over n_max intervals
    Stabilize(RunArgs),
    /// Riccati feedback synthesis and linear closed-loop checks
    Feedback(RunArgs),
    /// Nonlinear closed loop at epsilon_star
    ClosedLoop(RunArgs),
    /// Basin-of-attraction sweep over initial amplitudes
    Basin(RunArgs),
    /// Every stage plus SVG plots
    All(RunArgs),
    /// Render an SVG from a CSV or basin JSON artifact
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// decay, staircase or basin
        #[arg(long)]
        kind: PlotKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Reference(a) => (Stage::Reference, a),
        Command::Observability(a) => (Stage::Observability, a),
        Command::NullControl(a) => (Stage::NullControl, a),
        Command::Stabilize(a) => (Stage::Stabilize, a),
        Command::Feedback(a) => (Stage::Feedback, a),
        Command::ClosedLoop(a) => (Stage::ClosedLoop, a),
        Command::Basin(a) => (Stage::Basin, a),
        Command::All(a) => (Stage::All, a),
        Command::Plot { input, kind, out } => {
            let out = out.unwrap_or_else(|| input.with_extension("svg"));
            return match emit_plot(&input, kind, &out) {
                Ok(()) => {
                    println!("{}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG as u8)
                }
            };
        }
    };
    let cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let out = args.out.unwrap_or_else(|| PathBuf::from(&cfg.output));
    let seed = args.seed.unwrap_or(cfg.seed);
    match run(stage, &cfg, out.clone(), seed) {
        Ok(outcome) => {
            for a in &outcome.artifacts {
                println!("{}", out.join(a).display());
            }
            for f in &outcome.failed_checks {
                eprintln!("check failed: {f}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = hint(&e) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
