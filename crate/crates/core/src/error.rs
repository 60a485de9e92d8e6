use thiserror::Error;

/// Errors raised by the conversational-search pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,

    #[error("knowledge base mixes entity types {0:?} and {1:?}")]
    MixedEntityTypes(String, String),

    #[error("record {record:?}: field {field:?} is not a scalar value")]
    NonScalarField { record: String, field: String },

    #[error("malformed knowledge base: {0}")]
    MalformedKnowledgeBase(String),

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("ckr fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),

    #[error("operator {operator} is not allowed for attribute {attribute:?}")]
    OperatorNotAllowed { attribute: String, operator: String },

    #[error("type mismatch on attribute {attribute:?}: {detail}")]
    TypeMismatch { attribute: String, detail: String },

    #[error("embedding configuration error: {0}")]
    Embedding(String),

    #[error("invalid matcher configuration: {0}")]
    MatcherConfig(String),

    #[error("overlapping match candidates at tokens {0:?} and {1:?}")]
    OverlappingCandidates((usize, usize), (usize, usize)),

    #[error("candidate span [{0}, {1}) is out of bounds or empty")]
    InvalidSpan(usize, usize),

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("training corpus needs at least two distinct labels, found {0}")]
    SingleLabelCorpus(usize),

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("unknown intent label {0:?}")]
    UnknownIntent(String),

    #[error("empty training example text")]
    EmptyExampleText,

    #[error("unsupported model format {0:?}")]
    ModelFormat(String),

    #[error("entropy requested over an empty result set")]
    EmptyResults,

    #[error("attribute {0:?} is absent from every record")]
    AttributeAbsent(String),

    #[error("no template covers act kind {0}")]
    UncoveredAct(String),

    #[error("invalid template: {0}")]
    Template(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
