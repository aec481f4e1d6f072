//! Command line and HTTP front end for `sprintctl-core`.
//!
//! Every subcommand is a thin wrapper over library calls; [`run`] executes a
//! parsed command line and returns the text meant for standard output.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod json;
pub mod server;

use std::sync::Arc;

use cli::{Cli, Command};
use config::Defaults;
use error::CliResult;

pub fn run(cli: Cli, defaults: &Defaults) -> CliResult<String> {
    match cli.command {
        Command::Ingest(args) => commands::ingest_cmd(&args),
        Command::Build(args) => commands::build_cmd(&args, defaults),
        Command::Plan(args) => commands::plan_cmd(&args, defaults),
        Command::Track(args) => commands::track_cmd(&args),
        Command::Replan(args) => commands::replan_cmd(&args),
        Command::Simulate(args) => commands::simulate_cmd(&args, defaults),
        Command::Evaluate(args) => commands::evaluate_cmd(&args, defaults),
        Command::Report(args) => commands::report_cmd(&args),
        Command::Serve(args) => {
            let state = Arc::new(server::AppState::load(&args.base, &args.projects, defaults.control)?);
            let bind = args.bind.unwrap_or_else(|| defaults.serve.bind.clone());
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| sprintctl_core::Error::io("<tokio runtime>", e))?;
            runtime.block_on(server::run(state, &bind))?;
            Ok(String::new())
        }
    }
}
