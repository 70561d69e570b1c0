use clap::{Parser, Subcommand};
use henon_lab_cli::ExperimentKind;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "henon-lab", version, about = "Lyapunov exponent experiments for complex Hénon maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for the CSV and JSON sidecar.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    ScanFamily,
    ScanDegeneration,
    DegenerateLocus,
    TangencyReport,
    DimensionTable,
    LineTangency,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::ScanFamily => ExperimentKind::ScanFamily,
            Command::ScanDegeneration => ExperimentKind::ScanDegeneration,
            Command::DegenerateLocus => ExperimentKind::DegenerateLocus,
            Command::TangencyReport => ExperimentKind::TangencyReport,
            Command::DimensionTable => ExperimentKind::DimensionTable,
            Command::LineTangency => ExperimentKind::LineTangencyCount,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("henon-lab: configuration error: missing --config");
        std::process::exit(1);
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("henon-lab: {e}");
            std::process::exit(1);
        }
    }
    let code = henon_lab_cli::run(&config, Some(cli.command.kind()), cli.out.as_deref(), cli.seed);
    std::process::exit(code);
}
