mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Config(m) => ("config", m),
            Failure::Runtime(m) => ("runtime", m),
        };
        serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": self.code() } })
    }
}

impl From<mcpl::Error> for Failure {
    fn from(e: mcpl::Error) -> Self {
        match e {
            mcpl::Error::Config(_) | mcpl::Error::Json(_) | mcpl::Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::Config(e.to_string().trim_end().to_string());
            eprintln!("{}", f.json());
            return ExitCode::from(f.code());
        }
    };
    match commands::run(cli) {
        Ok(path) => {
            println!("{}", serde_json::json!({ "ok": true, "output": path }));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.json());
            ExitCode::from(f.code())
        }
    }
}
