use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pgflow_cli::{run, CliError, Command, ConfigSource};

/// Minimizing-movement experiments for perturbed gradient systems.
#[derive(Debug, Parser)]
#[command(name = "pgflow", version)]
struct Args {
    command: Command,
    /// TOML run description; defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `--set time.steps=128`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Quadrature panels per interval for the EDB integrals.
    #[arg(long)]
    substeps: Option<usize>,
    /// Relative gradient tolerance of the inner solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; overrides `output_dir` and PGFLOW_OUTPUT_ROOT.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let src = ConfigSource {
        path: args.config,
        command: Some(args.command),
        overrides: args.set,
        substeps: args.substeps,
        tol: args.tol,
        seed: args.seed,
    };
    let env_root = std::env::var_os("PGFLOW_OUTPUT_ROOT").map(PathBuf::from);
    match run(&src, args.out.as_deref(), env_root.as_deref()) {
        Ok(summary) => {
            for c in &summary.checks {
                println!("{}", c.line());
            }
            println!("wrote {}", summary.dir.display());
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Run(inner) = &e {
                log::debug!("{inner:?}");
            }
            ExitCode::from(2)
        }
    }
}
