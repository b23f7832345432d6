use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    InvalidConfig(Vec<String>),

    #[error("channel data needs {required} bytes, above the {cap}-byte cap")]
    MemoryCap { required: u64, cap: u64 },

    #[error("phantom is empty")]
    EmptyPhantom,

    #[error("volume is all zero")]
    ZeroVolume,

    #[error("level {level_db} dB is never crossed: lobe wider than profile support")]
    LobeWiderThanProfile { level_db: f64 },

    #[error("exclusion region covers the whole profile")]
    ExclusionCoversProfile,

    #[error("both regions have zero variance")]
    ZeroVariance,

    #[error("missing upstream artifact {}; run the `{stage}` stage first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("{} was produced under a different configuration; re-run the `{stage}` stage", path.display())]
    StaleArtifact { path: PathBuf, stage: &'static str },

    #[error("malformed artifact {}: {reason}", path.display())]
    MalformedArtifact { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    ConfigParse(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
