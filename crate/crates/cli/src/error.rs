use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration, including kernel-bound violations.
    Config(String),
    /// A task's inputs violate a mathematical precondition.
    Precondition(String),
    /// A verification suite ran and at least one check failed.
    Verification(String),
    /// Output could not be written.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Precondition(m) => write!(f, "precondition error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<stablemc_core::Error> for CliError {
    fn from(e: stablemc_core::Error) -> Self {
        use stablemc_core::Error as E;
        match e {
            E::Config(_) | E::Domain(_) | E::KernelBound(_) => CliError::Config(e.to_string()),
            E::Precondition(_) | E::Diagnostic(_) => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
