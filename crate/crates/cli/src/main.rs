use std::process::ExitCode;

use clap::Parser;

use g2node_cli::{commands, exit_code, RunConfig};

fn main() -> ExitCode {
    let args = RunConfig::parse();
    let level = match args.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match commands::run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
