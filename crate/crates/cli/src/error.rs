use std::fmt;

use valdesign::error::Error;

/// Exit codes: 0 success or not invalidated, 1 invalidated, 2 usage or
/// configuration error, 3 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => core_code(e),
        }
    }
}

fn core_code(e: &Error) -> i32 {
    match e {
        Error::Stage { source, .. } => core_code(source),
        Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::Parse(_)
        | Error::InvalidBounds(_)
        | Error::InvalidDistribution(_)
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::Velocity(_)
        | Error::SolidRegion
        | Error::NoDensity(_) => 2,
        _ => 3,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => {
                write!(f, "{e}")?;
                let mut src = std::error::Error::source(e);
                while let Some(s) = src {
                    write!(f, "\n  caused by: {s}")?;
                    src = s.source();
                }
                Ok(())
            }
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}
