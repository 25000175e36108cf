use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use conservrom_cli::{cmd_evaluate, cmd_generate, cmd_report, cmd_train, load_config};

#[derive(Parser)]
#[command(
    name = "conservrom",
    about = "Mass-conservative neural reduced order models for Darcy-type flow",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct StageArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for all artifacts of this run.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/test snapshot archives with the full-order solver.
    Generate(StageArgs),
    /// Train the configured surrogate variants on the train archive.
    Train(StageArgs),
    /// Evaluate trained variants on the test archive and emit metric tables.
    Evaluate {
        #[command(flatten)]
        args: StageArgs,
        /// Also emit a zero-error identity row computed from the reference
        /// fields themselves.
        #[arg(long)]
        fom_debug: bool,
    },
    /// Assemble the final comparison table and box-plot quartiles.
    Report(StageArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&StageArgs, Box<dyn FnOnce(&conservrom_cli::ResolvedConfig, &std::path::Path) -> conservrom_cli::StageResult<()>>) =
        match &cli.command {
            Command::Generate(a) => (a, Box::new(cmd_generate)),
            Command::Train(a) => (a, Box::new(cmd_train)),
            Command::Evaluate { args, fom_debug } => {
                let debug = *fom_debug;
                (args, Box::new(move |cfg, out| cmd_evaluate(cfg, out, debug)))
            }
            Command::Report(a) => (a, Box::new(cmd_report)),
        };

    let cfg = match load_config(&args.config, args.seed) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg, &args.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
