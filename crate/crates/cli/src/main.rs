mod commands;
mod config;
mod table;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

/// Exit status 2 for usage errors, 1 for everything that fails at run time.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(2),
            Failure::Numerical(_) | Failure::Io(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Numerical(m) => write!(f, "{m}"),
            Failure::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl From<dre_krylov::Error> for Failure {
    fn from(e: dre_krylov::Error) -> Self {
        use dre_krylov::Error as E;
        match e {
            E::InvalidParameter(_) | E::OracleTooLarge { .. } => Failure::Usage(e.to_string()),
            E::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = config::Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dre-krylov: {e}");
            e.exit_code()
        }
    }
}
