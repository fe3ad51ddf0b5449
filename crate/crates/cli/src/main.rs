use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fracgreen_cli::{execute, Command, RunManifest};

/// Fractional elliptic problems with gradient nonlinearity and measure data.
///
/// Exit codes: 0 success, 1 I/O or internal error, 2 invalid spec or
/// precondition, 3 no root of the smallness function, 4 non-convergence,
/// 5 verification failure.
#[derive(Debug, Parser)]
#[command(name = "fracgreen", version)]
struct Args {
    command: Command,

    /// JSON problem spec.
    #[arg(long)]
    spec: PathBuf,

    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,

    /// Seed for the test-function battery.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Override a spec entry, e.g. `--set g.c=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_pair)]
    set: Vec<(String, String)>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    if k.is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok((k.to_string(), v.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let manifest = RunManifest {
        command: args.command,
        spec_path: args.spec,
        out_dir: args.out,
        seed: args.seed,
        overrides: args.set,
    };
    ExitCode::from(execute(&manifest) as u8)
}
