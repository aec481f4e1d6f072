use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use sprintctl::cli::Cli;
use sprintctl::config::Defaults;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit with status 2 from inside clap.
    let cli = Cli::parse();
    let result = Defaults::from_env().and_then(|defaults| sprintctl::run(cli, &defaults));
    match result {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.as_bytes());
            let _ = stdout.flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
