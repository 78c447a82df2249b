use std::path::PathBuf;

/// Every failure the binary reports. `Display` is a single line of the form
/// `<category>: <detail>`.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {path}: field `{field}`: {message}")]
    ConfigField {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("config: {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("schema: {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("exists: {0} already exists (pass --force to overwrite)")]
    Exists(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{category}: {source}", category = core_category(source))]
    Core {
        #[from]
        source: clic_core::Error,
    },
}

fn core_category(e: &clic_core::Error) -> &'static str {
    use clic_core::Error::*;
    match e {
        Format { .. } => "format",
        Io { .. } => "io",
        InvalidParameter { .. } | Dimension(_) | Empty(_) => "invalid",
        Singular { .. } | Overflow(_) => "compute",
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::ConfigField { .. } | Self::Config { .. } | Self::Schema { .. } => 3,
            Self::Exists(_) => 4,
            Self::Io { .. } => 5,
            Self::Core { .. } => 1,
        }
    }

    /// The diagnostic with any embedded line breaks flattened.
    pub fn one_line(&self) -> String {
        let text = self.to_string();
        text.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

pub fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
