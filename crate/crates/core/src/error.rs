use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("duplicate token `{token}` at row {row}")]
    DuplicateToken { token: String, row: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("embedding table is empty")]
    EmptyTable,

    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,

    #[error("no candidate token with non-zero norm")]
    NoCandidates,

    #[error("degenerate mirror (|a| = {norm:e}){}", .word.as_ref().map(|w| alloc::format!(" for `{w}`")).unwrap_or_default())]
    DegenerateMirror { norm: f64, word: Option<String> },

    #[error("`{0}` has no known attribute side")]
    KnowledgeRequired(String),

    #[error("non-finite gradient; step rejected")]
    NonFiniteGradient,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("insufficient vocabulary: need {needed}, have {available}")]
    InsufficientVocabulary { needed: usize, available: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
