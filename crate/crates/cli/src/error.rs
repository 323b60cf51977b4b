use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsageKind {
    UnknownFlag,
    MissingRequired,
    BadValue,
}

impl fmt::Display for UsageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line or config; exit 2.
    #[error("error[{kind}]: {message}")]
    Usage { kind: UsageKind, message: String },
    /// Input or evaluation failure; exit 1.
    #[error("error[{kind}]: {message}")]
    Failed { kind: String, message: String },
}

impl CliError {
    pub fn usage(kind: UsageKind, message: impl Into<String>) -> Self {
        CliError::Usage {
            kind,
            message: message.into(),
        }
    }

    /// Wraps a library error, naming its variant.
    pub fn failed<E: fmt::Display + fmt::Debug>(context: impl fmt::Display, e: E) -> Self {
        CliError::Failed {
            kind: reidbench_core::error_kind(&e),
            message: format!("{context}: {e}"),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Failed { .. } => 1,
        }
    }

    /// Maps a clap parse error; `None` for help and version output.
    pub fn from_clap(e: &clap::Error) -> Option<UsageKind> {
        use clap::error::ErrorKind as K;
        match e.kind() {
            K::DisplayHelp | K::DisplayVersion => None,
            K::UnknownArgument | K::InvalidSubcommand => Some(UsageKind::UnknownFlag),
            K::MissingRequiredArgument
            | K::MissingSubcommand
            | K::DisplayHelpOnMissingArgumentOrSubcommand => Some(UsageKind::MissingRequired),
            _ => Some(UsageKind::BadValue),
        }
    }
}
