use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use densflow_cli::{dispatch, exit_code, parse_config, Subcommand};

#[derive(Parser)]
#[command(name = "densflow", version, about = "Doubly nonlinear diffusion with inhomogeneous density")]
struct Args {
    #[arg(value_enum)]
    command: Subcommand,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = parse_config(&args.config).and_then(|mut cfg| {
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        dispatch(args.command, &cfg, &out)
    });
    match &result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            eprintln!("verdict: {:?}", outcome.verdict);
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
