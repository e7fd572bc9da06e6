//! Error type carrying the process exit code.

use std::fmt;
use std::process::ExitCode;

use vropt_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Io,
    Divergence,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Io => 2,
            Kind::Divergence => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Io,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }

    /// Prefixes the message with some context, keeping the kind.
    pub fn context(self, what: impl fmt::Display) -> Self {
        CliError {
            kind: self.kind,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Io(_) | Error::Parse { .. } | Error::Format(_) | Error::EmptyDataset => Kind::Io,
            Error::Divergence { .. } | Error::LineSearch(_) | Error::NotConverged(_) => Kind::Divergence,
            Error::Dimension { .. }
            | Error::IndexOutOfRange { .. }
            | Error::NonSmoothLoss(_)
            | Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Precondition(_) => Kind::Usage,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_stable_codes() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "x");
        assert_eq!(CliError::from(Error::Io(io)).kind.code(), 2);
        assert_eq!(CliError::from(Error::Divergence { gamma: 1.0 }).kind.code(), 3);
        assert_eq!(CliError::from(Error::Config("bad".into())).kind.code(), 1);
        let parse = Error::Parse {
            line: 3,
            message: "oops".into(),
        };
        assert_eq!(CliError::from(parse).kind.code(), 2);
    }
}
