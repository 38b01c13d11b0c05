use std::fmt;
use std::path::Path;

use gemcap_core::Error;

/// Command outcome other than success, one variant per exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or arguments. Exit 1.
    Usage(String),
    /// Anything that went wrong while doing the work. Exit 2.
    Runtime(String),
    /// The work ran but a requested check did not hold. Exit 3.
    Check(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Check(_) => 3,
        }
    }

    pub fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
        move |e| Failure::Runtime(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}
