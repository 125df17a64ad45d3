use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use symspec::Error;
use symspec_cli::{run, Config};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Spectrum,
    Classify,
    Derivative,
    Split,
    Sweep,
    OracleCheck,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Spectrum => "spectrum",
            Kind::Classify => "classify",
            Kind::Derivative => "derivative",
            Kind::Split => "split",
            Kind::Sweep => "sweep",
            Kind::OracleCheck => "oracle-check",
        }
    }
}

/// Neumann spectra and shape derivatives on symmetric planar domains.
#[derive(Debug, Parser)]
#[command(name = "symspec", version)]
struct Cli {
    /// Experiment kind; must match `experiment.kind` in the config when given.
    kind: Option<Kind>,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Progress messages on stderr.
    #[arg(long)]
    verbose: bool,
}

fn fail(e: &Error) -> ExitCode {
    let cat = e.category();
    let body = serde_json::json!({ "error": { "category": cat.name(), "code": cat.code(), "message": e.to_string() } });
    eprintln!("{body}");
    ExitCode::from(cat.code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match Config::load(&cli.config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(k) = cli.kind {
        if k.name() != config.experiment.kind() {
            return fail(&Error::ConfigInvalid(format!(
                "subcommand {} does not match experiment.kind {}",
                k.name(),
                config.experiment.kind()
            )));
        }
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli.out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("symspec-out"));
    match run(&config, &out, cli.verbose) {
        Ok(m) => {
            if cli.verbose {
                eprintln!("{} files in {}", m.files.len(), out.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
