use std::fmt;
use std::path::PathBuf;

/// Everything a subcommand can fail with. Each variant maps to a stable
/// process exit code, see [`CliError::exit_code`].
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an infeasible configuration.
    Usage(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Input file does not follow its format.
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    /// Two tubes of one video share an instance ID.
    IdCollision {
        path: PathBuf,
        line: usize,
        video: u64,
        id: usize,
    },
    Divergence { step: usize },
    Core(iai_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Malformed { .. } | CliError::IdCollision { .. } => 3,
            CliError::Divergence { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Malformed { path, line, reason } => {
                write!(f, "{}:{line}: {reason}", path.display())
            }
            CliError::IdCollision {
                path,
                line,
                video,
                id,
            } => write!(
                f,
                "{}:{line}: instance id {id} appears twice in video {video}",
                path.display()
            ),
            CliError::Divergence { step } => write!(f, "training diverged (NaN loss) at step {step}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io { source, .. } => Some(source),
            CliError::Core(e) => Some(e),
            _ => None,
        }
    }
}

impl From<iai_core::Error> for CliError {
    fn from(e: iai_core::Error) -> Self {
        match e {
            iai_core::Error::Divergence { step } => CliError::Divergence { step },
            iai_core::Error::Capacity { .. } | iai_core::Error::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
