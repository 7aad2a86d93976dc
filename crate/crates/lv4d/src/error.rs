use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: malformed JSON: {detail}", path.display())]
    Json { path: PathBuf, detail: String },

    #[error("{}: {detail}", path.display())]
    Parse { path: PathBuf, detail: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Core(#[from] lv4d_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn json(path: &Path, e: serde_json::Error) -> Self {
        CliError::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        }
    }

    /// 2 for a degenerate deformation, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_degenerate() => 2,
            _ => 1,
        }
    }

    /// Name of the violated rule, when there is one.
    pub fn rule(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.rule(),
            CliError::Io { .. } => "readable-file",
            CliError::Json { .. } => "json",
            CliError::Parse { .. } => "format",
            CliError::Unknown { .. } => "known-name",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
