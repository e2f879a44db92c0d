use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = dfr_cli::Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dfr_cli::run(cli, &mut out) {
        Ok(()) => {
            let _ = out.flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e:#}");
            ExitCode::from(dfr_cli::exit_code(&e))
        }
    }
}
