use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use secantlab_core::run::{dispatch, parse_config, DispatchOptions};

const EXIT_CONFIG: u8 = 2;
const EXIT_PANIC: u8 = 3;

/// Run one secantlab configuration and write a JSON report.
#[derive(Debug, Parser)]
#[command(name = "secantlab", version)]
struct Args {
    /// TOML configuration file.
    config: PathBuf,

    /// Report destination; overrides `output_path` from the config.
    /// Defaults to stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Add per-grid-point diagnostics to hierarchy reports.
    #[arg(short, long)]
    verbose: bool,

    /// Add wall-clock milliseconds to the report. Reports are then no
    /// longer byte-reproducible.
    #[arg(long)]
    timing: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();

    let text = match std::fs::read(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }

    let opts = DispatchOptions {
        verbose: args.verbose,
        timing: args.timing,
    };
    let report = match panic::catch_unwind(AssertUnwindSafe(|| dispatch(&config, opts))) {
        Ok(r) => r,
        Err(_) => {
            eprintln!("error: internal numerical failure");
            return ExitCode::from(EXIT_PANIC);
        }
    };
    if args.verbose {
        eprintln!("status: {:?}", report.status);
        if let Some(e) = &report.error {
            eprintln!("note: {e}");
        }
    }

    let json = report.to_json();
    let destination = args.output.or_else(|| config.output_path.as_ref().map(PathBuf::from));
    let written = match &destination {
        Some(path) => std::fs::write(path, json.as_bytes()),
        None => std::io::stdout().lock().write_all(json.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    ExitCode::SUCCESS
}
