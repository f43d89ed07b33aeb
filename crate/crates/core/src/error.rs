use std::io;

/// Errors produced by the watermarking pipeline.
///
/// Tampering is never an error: a corrupted payload shows up as a failed
/// verdict in a [`crate::VerificationReport`]. The variants here are faults
/// in the inputs, the environment, or the chosen parameters.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("tensor `{0}` has a zero-length dimension")]
    EmptyTensor(String),

    #[error("tensor rank {0} is outside the supported range 1..=4")]
    UnsupportedRank(usize),

    #[error("shape mismatch: expected {expected} scalars, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("tensor `{0}` contains a non-finite scalar")]
    NonFiniteScalar(String),

    #[error("duplicate layer name `{0}`")]
    DuplicateLayer(String),

    #[error("invalid chunk length {0}: must be a positive multiple of 32 and at most 12000")]
    InvalidChunkLength(usize),

    #[error("malformed container at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    #[error("signal length {len} is not divisible by 2^{levels}")]
    LengthNotDivisible { len: usize, levels: u32 },

    #[error("malformed sub-band grid: {0}")]
    MalformedGrid(String),

    #[error("secret of {0} bytes exceeds the 956-byte payload budget")]
    SecretTooLarge(usize),

    #[error("payload must be exactly {expected} bits, got {actual}")]
    WrongLength { expected: usize, actual: usize },

    #[error("seed must be 32 bytes, got {0}")]
    BadSeedLength(usize),

    #[error("insufficient capacity: need {needed} positions, layer offers {available}")]
    InsufficientCapacity { needed: usize, available: usize },

    #[error("coefficient {value} is outside the scalable range for delta {delta}; raise delta")]
    CoefficientOutOfRange { value: f64, delta: f64 },

    #[error("invalid scaling parameters: {0}")]
    InvalidScaling(String),

    #[error("container has no layers eligible for embedding")]
    NoEligibleLayers,

    #[error("container carries no embed records")]
    MissingEmbedRecords,

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("class map is empty")]
    EmptyClassMap,

    #[error("invalid attack spec: {0}")]
    InvalidAttack(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid key file: {0}")]
    KeyFile(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
