//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by tensor math and the optimizer.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: tensor invariant violated: {reason}")]
    InvalidTensor { op: &'static str, reason: String },
    #[error(
        "conv2d: effective kernel {k_eff_h}x{k_eff_w} exceeds padded input extent {padded_h}x{padded_w}"
    )]
    KernelExceedsInput {
        k_eff_h: usize,
        k_eff_w: usize,
        padded_h: usize,
        padded_w: usize,
    },
    #[error("cross_entropy: label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward: loss must be a scalar, got {len} elements")]
    LossNotScalar { len: usize },
    #[error("sgd_step: non-finite gradient for parameter '{name}'")]
    NonFiniteGradient { name: String },
    #[error("cosine_lr: total step count must be positive")]
    ZeroTotalSteps,
    #[error("{0}")]
    Invalid(String),
}

/// Errors raised by dataset loading, windowing, and the synthetic generator.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("segment_windows: window size {window} does not divide {total} frames")]
    NonDivisibleWindow { window: usize, total: usize },
    #[error("merge_windows: window {index} has shape {got}, expected {expected}")]
    InconsistentWindow {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("normalize: training split is empty")]
    EmptyTrainSplit,
    #[error("dataset file '{path}': expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: String,
        expected: u64,
        actual: u64,
    },
    #[error("dataset '{path}': label {label} out of range for {classes} classes")]
    UnknownLabel {
        path: String,
        label: u8,
        classes: usize,
    },
    #[error("manifest: {0}")]
    BadManifest(String),
    #[error("io error on '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Errors raised by model construction and checkpoint (de)serialization.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("checkpoint: bad magic (expected \"RSCK\")")]
    BadMagic,
    #[error("checkpoint: unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("checkpoint: truncated or corrupt ({0})")]
    Corrupt(String),
    #[error("checkpoint: missing blob '{0}'")]
    MissingBlob(String),
    #[error("checkpoint: blob '{name}' has shape {got}, expected {expected}")]
    BlobShapeMismatch {
        name: String,
        expected: String,
        got: String,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("io error on '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Errors raised by the edge/cloud stream runtime and the wire codec.
#[derive(Debug, Error)]
pub enum StreamError {
    #[error("frame: bad magic (expected \"RSCW\")")]
    BadMagic,
    #[error("frame: unsupported wire version {0}")]
    BadVersion(u8),
    #[error("frame: crc mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("frame: truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("frame: {0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("frame: payload length {0} is not a multiple of 4")]
    BadPayloadLength(u16),
    #[error("encode_frame: payload of {0} floats exceeds the u16 length field")]
    PayloadTooLarge(usize),
    #[error("session {session_id}: frame payload implies m={got}, model expects m={expected}")]
    ConfigMismatch {
        session_id: u32,
        expected: usize,
        got: usize,
    },
    #[error("session {session_id}: window index {index} out of range (s={windows})")]
    WindowOutOfRange {
        session_id: u32,
        index: u16,
        windows: usize,
    },
    #[error("transport: {0}")]
    Transport(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Top-level error for pipeline entry points (training, evaluation, CLI).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("train: {0}")]
    Train(String),
    #[error("eval: {0}")]
    Eval(String),
    #[error("io error on '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
