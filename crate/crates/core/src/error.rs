use std::path::PathBuf;

/// Errors produced across the accompaniment engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("pitch {0} is outside the MIDI range 0..=127")]
    PitchRange(i64),
    #[error("unsupported time signature {0}/{1}")]
    TimeSignature(u32, u32),
    #[error("beat index {index} out of range for a bar of {beats_per_bar} beats")]
    BeatIndex { index: usize, beats_per_bar: usize },
    #[error("event at {onset} beats is not on the {grid} grid")]
    Unquantized { onset: f64, grid: &'static str },
    #[error("chord at {onset} beats lasts {duration} beats; chords must last at least one beat")]
    ShortChord { onset: f64, duration: f64 },
    #[error("empty chord")]
    EmptyChord,
    #[error("score has no chord events")]
    NoChords,
    #[error("invalid score: {0}")]
    InvalidScore(String),
    #[error("invalid chord map: {0}")]
    ChordMap(String),
    #[error("invalid pattern library at line {line}: {reason}")]
    PatternSyntax { line: usize, reason: String },
    #[error("invalid feature template at line {line}: {reason}")]
    TemplateSyntax { line: usize, reason: String },
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },
    #[error("prediction window must hold {expected} observations, got {got}")]
    WindowLength { expected: usize, got: usize },
    #[error("cache append for beat {got}, expected beat {expected}")]
    CacheOrder { expected: usize, got: usize },
    #[error("malformed prediction window: {0}")]
    MalformedWindow(String),
    #[error("label {0} is not in the vocabulary")]
    UnknownLabel(usize),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("corpus holds {bars} bars, fewer than one batch of {batch}")]
    CorpusTooSmall { bars: usize, batch: usize },
    #[error("feature annotations missing for piece {0}")]
    MissingAnnotation(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("midi: {0}")]
    Midi(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}
