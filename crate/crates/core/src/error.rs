use numcore::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid language code {0:?}")]
    InvalidLanguage(String),
    #[error("unregistered language {code} (registered: {registered})")]
    UnregisteredLanguage { code: String, registered: String },
    #[error("empty corpora")]
    EmptyCorpora,
    #[error("target vocabulary size {target} is below the forced base set of {base}")]
    VocabTooSmall { target: usize, base: usize },
    #[error("token id {id} out of range for vocabulary of {size}")]
    TokenOutOfRange { id: usize, size: usize },
    #[error("vocabulary file: {0}")]
    VocabFormat(String),
    #[error("{path}: line {line}: {msg}")]
    CorpusLine { path: String, line: usize, msg: String },
    #[error("{0}: empty corpus")]
    EmptyCorpus(String),
    #[error("already tagged: {0:?}")]
    AlreadyTagged(String),
    #[error("direction {0} has no examples")]
    EmptyDirection(String),
    #[error("untagged input")]
    UntaggedInput,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("truncated checkpoint")]
    TruncatedCheckpoint,
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u8),
    #[error("checkpoint header: {0}")]
    CheckpointFormat(String),
    #[error("vocabulary hash mismatch: checkpoint has {expected}, vocabulary is {actual}")]
    VocabMismatch { expected: String, actual: String },
    #[error("non-finite loss at step {step} (first bad op: {op})")]
    NonFiniteLoss { step: u64, op: String },
    #[error("{0} candidates but {1} references")]
    LengthMismatch(usize, usize),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("curve dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("curve parameter {0} outside [0, 1]")]
    OutOfUnitInterval(f64),
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("no curves to export")]
    NoCurves,
    #[error("unmatched sentences: {0:?}")]
    Unmatched(Vec<String>),
    #[error("zero-shot evaluation: {0}")]
    ZeroShot(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
