//! Binary entry point: parses the command line and maps errors to exit codes.

use clap::Parser;
use logbseg::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
