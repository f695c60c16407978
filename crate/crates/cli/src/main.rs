use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = bodynet_cli::Cli::parse();
    let mut out = std::io::stdout().lock();
    match bodynet_cli::run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bodynet: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
