use thiserror::Error;

/// Errors from parsing or validating a [`crate::SensingConfig`], a scene file,
/// or a runtime config patch.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("`{0}` cannot be changed at runtime: restart required")]
    RestartRequired(String),
}

impl ConfigError {
    pub(crate) fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::InvalidValue {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Errors from the binary trace codec. Offsets are byte offsets into the
/// decoded stream.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("bad magic at offset 0: expected \"CSI1\"")]
    BadMagic,
    #[error("unsupported trace version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated header at byte offset {offset}")]
    TruncatedHeader { offset: usize },
    #[error("truncated record for frame {frame_index} at byte offset {offset}")]
    TruncatedFrame { frame_index: usize, offset: usize },
    #[error("subcarrier count mismatch at byte offset {offset}: trace has {found}, expected {expected}")]
    SubcarrierMismatch {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("record length {len} does not match N = {n} (expected {expected} bytes)")]
    RecordLength { len: usize, n: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
