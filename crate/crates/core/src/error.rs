use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence length {len} exceeds max_context {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("empty token sequence")]
    EmptySequence,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("head (layer {layer}, head {head}) outside model with {n_layers} layers x {n_heads} heads")]
    HeadOutOfRange {
        layer: usize,
        head: usize,
        n_layers: usize,
        n_heads: usize,
    },

    #[error("loss mask selects no positions")]
    EmptyLossMask,

    #[error("loss mask length {got} does not match expected {expected}")]
    LossMaskLength { got: usize, expected: usize },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: u64, loss: f64 },

    #[error("non-finite value in tensor {0}")]
    NonFinite(String),

    #[error("checkpoint version {found} not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("lexicon: {0}")]
    Lexicon(String),

    #[error("unknown word {0:?}")]
    UnknownWord(String),

    #[error("invalid item: {0}")]
    InvalidItem(String),

    #[error("corpus leakage: {0}")]
    Leakage(String),

    #[error("prompt of {len} tokens exceeds context {max}")]
    PromptTooLong { len: usize, max: usize },

    #[error("malformed prompt: {0}")]
    MalformedPrompt(String),

    #[error("no decoded words")]
    NoDecodedWords,

    #[error("empty reference")]
    EmptyReference,

    #[error("group {0} has too few records")]
    EmptyGroup(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedAudio(String),

    #[error("audio too short: {0}")]
    AudioTooShort(String),

    #[error("gain of {gain_db:.2} dB would clip (peak {peak:.3})")]
    Clipping { gain_db: f64, peak: f64 },

    #[error("stretch factor {0} outside [0.25, 4]")]
    FactorOutOfRange(f64),

    #[error("no voiced frames")]
    Unvoiced,

    #[error("insufficient vocabulary: {0}")]
    InsufficientVocabulary(String),

    #[error("k = {k} too large: only {available} heads available")]
    KTooLarge { k: usize, available: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("incomplete run: stage {0} has not completed")]
    IncompleteRun(String),

    #[error("missing data for condition {0}")]
    MissingCondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    /// Process exit code: 2 for data errors, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::NonFinite(_) => 3,
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
