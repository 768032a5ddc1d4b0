use css_core::CssError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}unknown key `{key}`", at(*.line))]
    UnknownKey { key: String, line: usize },
    #[error("`{key}` = `{value}`: expected {expected}")]
    TypeError { key: String, value: String, expected: String },
    #[error("missing required key `{0}`")]
    MissingRequired(String),
    #[error("{}expected `key=value`, got `{text}`", at(*.line))]
    Syntax { line: usize, text: String },
    #[error("{}`{key}` given twice", at(*.line))]
    DuplicateKey { key: String, line: usize },
    #[error("`{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("bad magic {found:?}, expected \"CSS1\"")]
    BadMagic { found: [u8; 4] },
    #[error("checkpoint version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated checkpoint: need {expected} bytes, have {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("checkpoint has {extra} bytes after the payload")]
    TrailingBytes { extra: usize },
    #[error("selftest failed: {}", .0.join(", "))]
    SelftestFailed(Vec<String>),
    #[error(transparent)]
    Numerics(#[from] CssError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::UnknownKey { .. } => "unknown-key",
            CliError::TypeError { .. } => "type-error",
            CliError::MissingRequired(_) => "missing-required",
            CliError::Syntax { .. } => "syntax-error",
            CliError::DuplicateKey { .. } => "duplicate-key",
            CliError::InvalidValue { .. } => "invalid-value",
            CliError::Io { .. } => "io",
            CliError::BadMagic { .. } => "bad-magic",
            CliError::VersionMismatch { .. } => "version-mismatch",
            CliError::TruncatedPayload { .. } => "truncated-payload",
            CliError::TrailingBytes { .. } => "trailing-bytes",
            CliError::SelftestFailed(_) => "selftest-failed",
            CliError::Numerics(e) => e.category(),
        }
    }

    /// Process exit status. Configuration problems are 10-19, I/O 20,
    /// checkpoint format 30-39, numerical errors 40-59.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "unknown-key" => 10,
            "type-error" => 11,
            "missing-required" => 12,
            "syntax-error" => 13,
            "duplicate-key" => 14,
            "invalid-value" => 15,
            "io" => 20,
            "bad-magic" => 30,
            "version-mismatch" => 31,
            "truncated-payload" => 32,
            "trailing-bytes" => 33,
            "invalid-argument" => 40,
            "length-mismatch" => 41,
            "grid-kind-mismatch" => 42,
            "plan-mismatch" => 43,
            "integration-diverged" => 44,
            "nonuniform-sampling" => 45,
            "too-few-samples" => 46,
            "moment-overflow" => 47,
            "wrong-coupling" => 48,
            "no-sign-change" => 49,
            "bracket-not-found" => 50,
            "undecided-dominated" => 51,
            "nonconvergence" => 52,
            "selftest-failed" => 60,
            _ => 1,
        }
    }
}

/// Line 0 marks a key that came from the command line.
fn at(line: usize) -> String {
    if line == 0 {
        "command line: ".into()
    } else {
        format!("line {line}: ")
    }
}
