use std::process::ExitCode;

use clap::Parser;
use hsi_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hsi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
