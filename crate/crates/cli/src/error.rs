use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{origin}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    ConfigParse {
        origin: String,
        line: Option<usize>,
        message: String,
    },

    #[error("{0}")]
    Core(#[from] clockspin::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad inputs, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use clockspin::Error as E;
        match self {
            CliError::Config(_) | CliError::ConfigParse { .. } | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                E::EigenFailure
                | E::NotConverged { .. }
                | E::FitRejected(_)
                | E::NotHermitian(_)
                | E::ZeroFrequency(_) => 3,
                _ => 2,
            },
        }
    }
}
