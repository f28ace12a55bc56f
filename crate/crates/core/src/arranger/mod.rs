//! Arrangement phase: once per completed beat, label that beat with a chord
//! and append it to the [`ChordCache`]. Cached chords are context for later
//! arrangement and for the predictor; they are never played.

mod model;
pub mod nn;
mod train;

use std::collections::VecDeque;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::features::{ChordFlagTracker, FeatureConfig, FeatureTracker};
use crate::score::{ChordMap, STEPS_PER_BEAT};
use crate::{Chord, Pitch, TimeSignature, Tonality};
pub use model::{
    ArrangerConfig, ArrangerModel, DecoderToken, EncodedInput, EncoderToken, Trace, DECODER_TOKENS, ENCODER_TOKENS,
};
pub use train::{
    evaluation_loss, streaming_accuracy, teacher_forced_accuracy, train_arranger, training_examples, Adam, EpochStats,
    Example,
};

/// Anything that turns one beat of tokens plus the cache tail into a chord.
pub trait Arranger: Send + Sync {
    fn arrange_beat(&self, melody_beat: &[EncoderToken], cache_tail: &[DecoderToken]) -> Result<Chord>;

    /// Features the tokens must carry.
    fn feature_mask(&self) -> FeatureMask {
        FeatureMask::ALL
    }
}

impl Arranger for ArrangerModel {
    fn arrange_beat(&self, melody_beat: &[EncoderToken], cache_tail: &[DecoderToken]) -> Result<Chord> {
        self.arrange(melody_beat, cache_tail)
    }

    fn feature_mask(&self) -> FeatureMask {
        self.mask()
    }
}

/// Plays back each beat's weighted factor; needs no training.
#[derive(Clone, Copy, Debug)]
pub struct RuleArranger {
    /// MIDI pitch of the C below every voiced root.
    pub base: u8,
}

impl Default for RuleArranger {
    fn default() -> Self {
        RuleArranger { base: 36 }
    }
}

impl Arranger for RuleArranger {
    fn arrange_beat(&self, melody_beat: &[EncoderToken], cache_tail: &[DecoderToken]) -> Result<Chord> {
        if melody_beat.len() != ENCODER_TOKENS {
            return Err(Error::WindowLength { expected: ENCODER_TOKENS, got: melody_beat.len() });
        }
        match melody_beat.iter().find_map(|t| t.weighted_factor) {
            Some(f) => Chord::new(ChordMap::standard().voicing(f, self.base)),
            None => cache_tail.last().map(|t| t.chord.clone()).ok_or(Error::EmptyChord),
        }
    }
}

/// Which features reach the embeddings; a disabled feature is replaced by its
/// null embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeatureMask {
    pub weighted_notes: bool,
    pub weighted_factor: bool,
    pub beat_in_bar: bool,
    pub structural: bool,
    pub terminal: bool,
}

impl FeatureMask {
    pub const ALL: FeatureMask =
        FeatureMask { weighted_notes: true, weighted_factor: true, beat_in_bar: true, structural: true, terminal: true };
    pub const NONE: FeatureMask =
        FeatureMask { weighted_notes: false, weighted_factor: false, beat_in_bar: false, structural: false, terminal: false };
}

impl Default for FeatureMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// Append-only chord cache shared between the arranger (single writer) and
/// any number of readers. A reader sees either the whole entry or none of it.
#[derive(Clone, Debug, Default)]
pub struct ChordCache {
    entries: Arc<RwLock<Vec<Chord>>>,
}

impl ChordCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the chord of `beat`, which must be the next index.
    pub fn append(&self, beat: usize, chord: Chord) -> Result<()> {
        let mut e = self.entries.write().expect("cache lock");
        if beat != e.len() {
            return Err(Error::CacheOrder { expected: e.len(), got: beat });
        }
        e.push(chord);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, beat: usize) -> Option<Chord> {
        self.entries.read().expect("cache lock").get(beat).cloned()
    }

    pub fn snapshot(&self) -> Vec<Chord> {
        self.entries.read().expect("cache lock").clone()
    }
}

/// Per-stream arrangement state: streaming feature trackers and the decoder
/// tail. It only ever sees the samples of beats already completed and the
/// chords it appended itself.
#[derive(Clone, Debug)]
pub struct ArrangementStream {
    ts: TimeSignature,
    tracker: FeatureTracker<'static>,
    flags: ChordFlagTracker,
    tail: VecDeque<DecoderToken>,
    mask: FeatureMask,
}

impl ArrangementStream {
    pub fn new(ts: TimeSignature, tonality: Tonality, mask: FeatureMask) -> Self {
        ArrangementStream {
            ts,
            tracker: FeatureTracker::new(ts, tonality, ChordMap::standard(), FeatureConfig::default()),
            flags: ChordFlagTracker::new(tonality),
            tail: VecDeque::with_capacity(DECODER_TOKENS + 1),
            mask,
        }
    }

    /// Beats arranged (or recorded) so far.
    pub fn beats(&self) -> usize {
        self.tracker.beats()
    }

    /// Encoder tokens of the next beat; advances the feature trackers.
    pub fn encode_beat(&mut self, samples: &[Pitch]) -> Result<Vec<EncoderToken>> {
        if samples.len() != STEPS_PER_BEAT {
            return Err(Error::WindowLength { expected: STEPS_PER_BEAT, got: samples.len() });
        }
        let beat = self.tracker.beats();
        let f = self.tracker.push_beat(samples);
        let m = self.mask;
        Ok(samples
            .iter()
            .enumerate()
            .map(|(i, &p)| EncoderToken {
                melody_pitch: p,
                weighted_note: m.weighted_notes.then_some(f.weighted[i]),
                weighted_factor: m.weighted_factor.then_some(f.factor),
                beat_in_bar: m.beat_in_bar.then_some(beat % self.ts.beats_per_bar()),
            })
            .collect())
    }

    pub fn cache_tail(&self) -> Vec<DecoderToken> {
        self.tail.iter().cloned().collect()
    }

    /// Pushes the chord chosen for the last encoded beat onto the tail.
    pub fn record(&mut self, chord: &Chord) {
        let f = self.flags.push(chord);
        if self.tail.len() == DECODER_TOKENS {
            self.tail.pop_front();
        }
        self.tail.push_back(DecoderToken {
            chord: chord.clone(),
            structural: self.mask.structural.then_some(f.structural),
            terminal: self.mask.terminal.then_some(f.terminal),
        });
    }

    /// Encodes, arranges and records one completed beat.
    pub fn step(&mut self, arranger: &dyn Arranger, samples: &[Pitch]) -> Result<Chord> {
        let tokens = self.encode_beat(samples)?;
        let chord = arranger.arrange_beat(&tokens, &self.cache_tail())?;
        self.record(&chord);
        Ok(chord)
    }
}

/// Arranges every beat of `score` in stream order, each beat conditioned on
/// the chords arranged before it.
pub fn arrange_score(arranger: &dyn Arranger, score: &crate::Score) -> Result<Vec<Chord>> {
    let mut stream = ArrangementStream::new(score.time_signature, score.tonality, arranger.feature_mask());
    (0..score.beats()).map(|b| stream.step(arranger, score.melody_beat(b))).collect()
}
