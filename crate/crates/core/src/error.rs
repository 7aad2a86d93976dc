use alloc::string::String;

/// Every validation failure carries the name of the rule it broke so callers
/// (CLI, HTTP service) can surface it verbatim.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid volume [{rule}]: {detail}")]
    InvalidVolume { rule: &'static str, detail: String },

    #[error("invalid annotation [{rule}]: {detail}")]
    InvalidAnnotation { rule: &'static str, detail: String },

    #[error("invalid mesh [{rule}]: {detail}")]
    InvalidMesh { rule: &'static str, detail: String },

    #[error("invalid argument [{rule}]: {detail}")]
    InvalidArgument { rule: &'static str, detail: String },

    /// A deformation lost Jacobian positivity. `context` names where
    /// (frame / angle) when known.
    #[error("degenerate deformation [{rule}]: {context}")]
    Degenerate { rule: &'static str, context: String },
}

impl Error {
    pub fn rule(&self) -> &'static str {
        match self {
            Error::InvalidVolume { rule, .. }
            | Error::InvalidAnnotation { rule, .. }
            | Error::InvalidMesh { rule, .. }
            | Error::InvalidArgument { rule, .. }
            | Error::Degenerate { rule, .. } => rule,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate { .. })
    }

    pub(crate) fn volume(rule: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidVolume {
            rule,
            detail: detail.into(),
        }
    }

    pub(crate) fn annotation(rule: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidAnnotation {
            rule,
            detail: detail.into(),
        }
    }

    pub(crate) fn mesh(rule: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidMesh {
            rule,
            detail: detail.into(),
        }
    }

    pub(crate) fn arg(rule: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            rule,
            detail: detail.into(),
        }
    }

    pub(crate) fn degenerate(rule: &'static str, context: impl Into<String>) -> Self {
        Error::Degenerate {
            rule,
            context: context.into(),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
