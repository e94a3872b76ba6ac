// Casts from core constants are no-ops by default but real under its f32 feature.
#![allow(clippy::unnecessary_cast)]

//! Entry point: argument parsing and exit-code mapping.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
//! failure (divergence, failed pattern verification).

mod args;
mod run;

use clap::error::ErrorKind;
use clap::Parser;
use transher::error::Error;

fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::UnsupportedVariant { .. } => 1,
        Error::NonFinite { .. } | Error::ZeroNormEntity { .. } => 3,
        _ => 2,
    }
}

fn main() {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        args::Command::Train(a) => run::cmd_train(a),
        args::Command::Eval(a) => run::cmd_eval(a),
        args::Command::InitSearch(a) => run::cmd_init_search(a),
        args::Command::Verify(a) => run::cmd_verify(a),
        args::Command::Query(a) => run::cmd_query(a),
        args::Command::Analyze(a) => run::cmd_analyze(a),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
