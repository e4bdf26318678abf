use thiserror::Error;

/// Failure of a command. Rendered on stderr as a single
/// `error[CODE]: message` line.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Train(String),
    #[error("{0}")]
    Attack(String),
    #[error("{0}")]
    Metric(String),
    #[error("{0}")]
    Profile(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "E_USAGE",
            CliError::Config(_) => "E_CONFIG",
            CliError::Io(_) => "E_IO",
            CliError::Data(_) => "E_DATA",
            CliError::Train(_) => "E_TRAIN",
            CliError::Attack(_) => "E_ATTACK",
            CliError::Metric(_) => "E_METRIC",
            CliError::Profile(_) => "E_PROFILE",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// The one-line form written to stderr.
    pub fn render(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.code())
    }

    /// Wraps an engine error under the stage it occurred in.
    pub fn engine(stage: fn(String) -> CliError, e: trustprobe::Error) -> CliError {
        use trustprobe::Error as E;
        match e {
            E::Data(d) => CliError::Data(d.to_string()),
            E::Config(m) => CliError::Config(m),
            E::MissingAxis { .. } | E::AxisSpec(_) => CliError::Profile(e.to_string()),
            e => stage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<trustprobe::dataio::DataError> for CliError {
    fn from(e: trustprobe::dataio::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(format!("json: {e}"))
    }
}
