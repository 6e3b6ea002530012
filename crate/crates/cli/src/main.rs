mod args;
mod commands;
mod plot;
mod run;

use std::process::ExitCode;

use clap::Parser;
use danet::Error;

use args::{Cli, Command};

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const DATA: u8 = 3;
    pub const SEQUENCING: u8 = 4;
    pub const NUMERIC: u8 = 5;
}

/// A failed command, optionally tagged with the pipeline step that failed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core { step: Option<String>, error: Error },
}

impl Failure {
    pub fn at(step: impl Into<String>) -> impl FnOnce(Error) -> Failure {
        let step = step.into();
        move |error| Failure::Core { step: Some(step), error }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => exit::USAGE,
            Failure::Core { error, .. } => match error {
                Error::Sequencing { .. } => exit::SEQUENCING,
                Error::Numeric(_) => exit::NUMERIC,
                Error::Param(_) | Error::Config(_) | Error::Nyquist { .. } => exit::USAGE,
                Error::State(_) => exit::FAILURE,
                _ => exit::DATA,
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure::Core { step: None, error }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage error: {msg}"),
            Failure::Core { step: Some(s), error } => write!(f, "{s} failed: {error}"),
            Failure::Core { step: None, error } => write!(f, "{error}"),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let seed = cli.seed;
    let outcome = match cli.command {
        Command::Synth(a) => commands::synth(a, seed),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Delineate(a) => commands::delineate(a),
        Command::Weights(a) => commands::weights(a),
        Command::Pretrain(a) => commands::pretrain(a, seed),
        Command::Train(a) => commands::train(a, seed),
        Command::Finetune(a) => commands::finetune(a, seed),
        Command::TrainH(a) => commands::train_h(a, seed),
        Command::TrainBaseline(a) => commands::train_baseline(a, seed),
        Command::Eval(a) => commands::eval(a),
        Command::Plot(a) => plot::cmd_plot(a),
        Command::Pipeline(a) => run::cmd_pipeline(a, seed),
    };
    match outcome {
        Ok(()) => ExitCode::from(exit::OK),
        Err(f) => {
            log::error!("{f}");
            ExitCode::from(f.code())
        }
    }
}
