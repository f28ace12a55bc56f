//! Command-line front end: corpus preparation, training, evaluation,
//! streaming and the accompaniment service.

mod commands;
pub mod engines;
pub mod input;
pub mod serve;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::time::Duration;

use lookahead::arranger::FeatureMask;
use lookahead::pipeline::{ClockMode, Scheduler};

pub use commands::run;

#[derive(Parser, Debug)]
#[command(name = "lookahead", version, about = "Real-time melody accompaniment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the bundled toy corpus as raw pieces.
    GenCorpus(GenCorpusArgs),
    /// Screen and normalize a raw corpus directory.
    PrepareData(PrepareArgs),
    /// Train the arranging transformer.
    TrainArranger(TrainArrangerArgs),
    /// Train the CRF predictor.
    TrainPredictor(TrainPredictorArgs),
    /// Score a corpus with the objective metrics.
    Evaluate(EvaluateArgs),
    /// Run one melody through the two-phase pipeline.
    RunStream(RunStreamArgs),
    /// Serve sessions over WebSocket `/stream` or stdin/stdout.
    Serve(ServeArgs),
    /// Inspect the streaming feature extractors on a corpus.
    #[command(subcommand)]
    Features(FeaturesCommand),
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Generated pieces, on top of the folk tunes.
    #[arg(long, default_value_t = 27)]
    pub count: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub reject_log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Full,
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Feature {
    WeightedNotes,
    WeightedFactor,
    BeatInBar,
    Structural,
    Terminal,
}

pub fn mask_without(disabled: &[Feature]) -> FeatureMask {
    let off = |f| disabled.contains(&f);
    FeatureMask {
        weighted_notes: !off(Feature::WeightedNotes),
        weighted_factor: !off(Feature::WeightedFactor),
        beat_in_bar: !off(Feature::BeatInBar),
        structural: !off(Feature::Structural),
        terminal: !off(Feature::Terminal),
    }
}

#[derive(Args, Debug)]
pub struct TrainArrangerArgs {
    /// Clean corpus: a `.jsonl` file or a directory holding `corpus.jsonl`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_bars: Option<usize>,
    /// Train without a feature (repeatable), for ablations.
    #[arg(long, value_enum)]
    pub without: Vec<Feature>,
    #[arg(long, default_value = "arranger.lkah")]
    pub out: PathBuf,
    /// Epochs between progress lines.
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
}

#[derive(Args, Debug)]
pub struct TrainPredictorArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Template file; the bundled set when omitted.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, default_value_t = 35)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 3)]
    pub freq: usize,
    #[arg(long, default_value_t = 4.0)]
    pub cost: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Build the training cache with this arranger checkpoint instead of
    /// the gold chords.
    #[arg(long)]
    pub cache_from: Option<PathBuf>,
    #[arg(long, default_value = "predictor.lkah")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Scores to evaluate (`.jsonl` or corpus directory).
    #[arg(long)]
    pub score: PathBuf,
    /// Reference corpus; the report then carries per-metric differences.
    #[arg(long)]
    pub against: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub report: ReportFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ClockArg {
    Sim,
    Rt,
}

impl From<ClockArg> for ClockMode {
    fn from(c: ClockArg) -> Self {
        match c {
            ClockArg::Sim => ClockMode::Simulated,
            ClockArg::Rt => ClockMode::Realtime,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SchedulerArg {
    Interleaved,
    Threaded,
}

impl From<SchedulerArg> for Scheduler {
    fn from(s: SchedulerArg) -> Self {
        match s {
            SchedulerArg::Interleaved => Scheduler::Interleaved,
            SchedulerArg::Threaded => Scheduler::Threaded,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EngineArgs {
    /// Arranger checkpoint, or `rule` for the untrained rule arranger.
    #[arg(long, default_value = "rule")]
    pub arranger: String,
    /// Predictor model file, or `echo` to repeat the latest cached chord.
    #[arg(long, default_value = "echo")]
    pub predictor: String,
    /// Texture pattern library; the bundled one when omitted.
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SchedulerArg::Interleaved)]
    pub scheduler: SchedulerArg,
    /// Longest wait for the arranger before predicting on a stale cache.
    #[arg(long, default_value_t = 100)]
    pub cache_wait_ms: u64,
}

impl EngineArgs {
    pub fn cache_wait(&self) -> Duration {
        Duration::from_millis(self.cache_wait_ms)
    }
}

#[derive(Args, Debug)]
pub struct RunStreamArgs {
    /// Wire messages (NDJSON), a clean-corpus file or directory; `-` reads stdin.
    #[arg(long)]
    pub input: String,
    /// Which record to play when the input is a corpus.
    #[arg(long, default_value_t = 0)]
    pub piece: usize,
    #[arg(long, value_enum, default_value_t = ClockArg::Sim)]
    pub clock: ClockArg,
    /// Tempo; overrides a `start` message in the input. 80 when neither is given.
    #[arg(long)]
    pub bpm: Option<f64>,
    #[command(flatten)]
    pub engines: EngineArgs,
    /// Event log destination; stdout when omitted.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Melody, played chords and rendered texture as a MIDI file.
    #[arg(long)]
    pub emit_midi: Option<PathBuf>,
    /// Melody with the played chords as a corpus record, for `evaluate`.
    #[arg(long)]
    pub emit_score: Option<PathBuf>,
    /// Recorded in the summary. Inference has no random component, so the
    /// output does not depend on it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    pub listen: String,
    /// Serve a single session on stdin/stdout instead of WebSocket.
    #[arg(long)]
    pub stdio: bool,
    #[arg(long, value_enum, default_value_t = ClockArg::Rt)]
    pub clock: ClockArg,
    #[command(flatten)]
    pub engines: EngineArgs,
    /// Re-read the pattern library at every session start.
    #[arg(long)]
    pub reload_patterns: bool,
}

#[derive(Subcommand, Debug)]
pub enum FeaturesCommand {
    /// Per-beat weighted notes, weighted factor and chord flags as JSON lines.
    Dump {
        #[arg(long)]
        corpus: PathBuf,
        /// Only this piece id.
        #[arg(long)]
        piece: Option<String>,
    },
}
