use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] wf_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("nothing to plot: {0}")]
    EmptyReport(String),

    #[error("{failed} of {total} cells failed")]
    Partial { failed: usize, total: usize },
}

impl HarnessError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for numerical failures, 4 when only
    /// some comparison cells failed, 1 for I/O and missing inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Core(e) => match e {
                wf_core::Error::Io(_) | wf_core::Error::Json(_) | wf_core::Error::Format(_) => 1,
                _ => 3,
            },
            Self::Partial { .. } => 4,
            Self::Io { .. } | Self::MissingInput(_) | Self::EmptyReport(_) => 1,
        }
    }
}
