use std::fmt::Display;
use std::process::ExitCode;

/// A failed run, classified by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Malformed command line (exit 1).
    Usage(String),
    /// Missing, unreadable or invalid input (exit 2).
    Input(String),
    /// Failure while computing or writing results (exit 3).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        })
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Runtime(m) => m,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a context string and an exit class to any displayable error.
pub trait Classify<T> {
    fn input(self, what: impl Display) -> CliResult<T>;
    fn runtime(self, what: impl Display) -> CliResult<T>;
}

impl<T, E: Display> Classify<T> for Result<T, E> {
    fn input(self, what: impl Display) -> CliResult<T> {
        self.map_err(|e| CliError::Input(one_line(format!("{what}: {e}"))))
    }

    fn runtime(self, what: impl Display) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(one_line(format!("{what}: {e}"))))
    }
}

fn one_line(s: String) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
