use std::fmt;
use std::process::ExitCode;

use splatforge::Error;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const CONFIG: u8 = 2;
pub const IO: u8 = 3;
pub const SERVICE: u8 = 4;
pub const NUMERICAL: u8 = 5;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: CONFIG, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: IO, message: message.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Parse { .. } => IO,
            Error::Guidance(_) | Error::ShapeMismatch(_) => SERVICE,
            Error::Aborted(_) => NUMERICAL,
            Error::EmptyInput(_)
            | Error::InvalidParameter(_)
            | Error::MissingAttribute(_)
            | Error::InsufficientPoints { .. }
            | Error::MissingTarget(_)
            | Error::Config(_) => CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Prefixes the error message with what was being done.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| {
            let mut f = e.into();
            f.message = format!("{}: {}", what(), f.message);
            f
        })
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}
