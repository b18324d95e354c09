//! Command-line front end. [`run`] parses argv (after merging the optional
//! config file), dispatches to one subcommand and maps failures to exit codes.

use std::ffi::OsString;
use std::fmt;

use clap::{CommandFactory, Parser};

pub mod args;
pub mod commands;
pub mod config;
pub mod demo;

use args::{Cli, Command};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad flags, unreadable or unwritable files, sockets that cannot bind.
    Input(String),
    /// Inputs that parse but hold nothing usable, or a failed demo check.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

fn parse(argv: Vec<OsString>) -> Result<Cli, i32> {
    let argv = match config::config_path(&argv) {
        Some(path) => config::load(path.as_ref()).and_then(|entries| config::merge(&Cli::command(), argv, &entries)),
        None => Ok(argv),
    };
    let argv = argv.map_err(|e| {
        eprintln!("error: {e}");
        1
    })?;
    Cli::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            1
        } else {
            0
        }
    })
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Decode(a) => commands::decode(a),
        Command::Isolate(a) => commands::isolate(a),
        Command::Relocate(a) => commands::relocate_cmd(a),
        Command::Filter(a) => commands::filter(a),
        Command::Synth(c) => commands::synth(c),
        Command::Render(a) => commands::render(a),
        Command::Replay(a) => commands::replay_cmd(a),
        Command::Listen(a) => commands::listen(a),
        Command::Ima(a) => commands::ima(a),
        Command::Demo(a) => demo::demo(a),
    }
}

/// Exit code: 0 on success, 1 on input or usage errors, 2 on data errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cli = match parse(argv.into_iter().map(Into::into).collect()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
