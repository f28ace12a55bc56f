use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::cadence::{harmonic_steps, is_terminal, structural_chord_flag, terminal_chord_flags, HarmonicStep};
use super::factor::{choose_factor, splice_segments, Nearest, SpliceResult, WEIGHTED_NOTE_WEIGHT};
use super::weighted::{segment_notes, weighted_notes};
use crate::score::{Chord, ChordMap, ChordMapEntry, Pitch, Score, TimeSignature, Tonality, WeightedPcs, STEPS_PER_BEAT};

/// Beats covered by the weighted-note sliding window.
pub const WINDOW_BEATS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureConfig {
    /// Upper bound on the beats a spliced segment may span.
    pub max_splice_beats: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { max_splice_beats: 16 }
    }
}

/// Melody features of one completed beat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeatFeatures {
    pub beat: usize,
    /// Weighted-note flag of each sixteenth slot.
    pub weighted: [bool; STEPS_PER_BEAT],
    pub factor: ChordMapEntry,
    /// First-stage statistics of the beat alone.
    pub stats: WeightedPcs,
    pub splice: SpliceResult,
}

/// Causal melody feature extractor: consumes one beat at a time and never
/// looks past the end of the current beat. Note durations are therefore cut
/// at the current time when flags are decided.
#[derive(Clone, Debug)]
pub struct FeatureTracker<'m> {
    ts: TimeSignature,
    tonality: Tonality,
    config: FeatureConfig,
    nearest: Nearest<'m>,
    melody: Vec<Pitch>,
    note_flags: HashMap<usize, bool>,
    stats: Vec<WeightedPcs>,
    previous: Option<ChordMapEntry>,
}

impl<'m> FeatureTracker<'m> {
    pub fn new(ts: TimeSignature, tonality: Tonality, map: &'m ChordMap, config: FeatureConfig) -> Self {
        FeatureTracker {
            ts,
            tonality,
            config,
            nearest: Nearest::new(map),
            melody: Vec::new(),
            note_flags: HashMap::new(),
            stats: Vec::new(),
            previous: None,
        }
    }

    pub fn beats(&self) -> usize {
        self.stats.len()
    }

    pub fn push_beat(&mut self, samples: &[Pitch]) -> BeatFeatures {
        assert_eq!(samples.len(), STEPS_PER_BEAT, "a beat holds four sixteenth samples");
        let beat = self.stats.len();
        let start = beat * STEPS_PER_BEAT;
        let end = start + STEPS_PER_BEAT;
        self.melody.extend_from_slice(samples);

        let window_start = (beat + 1).saturating_sub(WINDOW_BEATS) * STEPS_PER_BEAT;
        let notes = segment_notes(&self.melody, window_start, end, self.ts);
        for (note, flag) in notes.iter().zip(weighted_notes(&notes)) {
            if note.onset_step >= start {
                self.note_flags.insert(note.onset_step, flag);
            }
        }

        let mut weighted = [false; STEPS_PER_BEAT];
        let mut stats = WeightedPcs::default();
        for note in segment_notes(&self.melody, start, end, self.ts) {
            let flag = self.note_flags.get(&note.onset_step).copied().unwrap_or(false);
            let from = note.onset_step.max(start) - start;
            let to = note.end_step() - start;
            weighted[from..to].fill(flag);
            let weight = if flag { WEIGHTED_NOTE_WEIGHT } else { 1 };
            stats.add(note.pitch.class().expect("notes are not rests"), weight);
        }
        self.stats.push(stats);

        let first = self.stats.len().saturating_sub(self.config.max_splice_beats);
        let splice = splice_segments(&self.stats[first..], &mut self.nearest, self.config.max_splice_beats);
        let factor = choose_factor(&splice, stats.is_empty(), self.previous, self.tonality, self.nearest.map());
        self.previous = Some(factor);
        BeatFeatures {
            beat,
            weighted,
            factor,
            stats,
            splice,
        }
    }
}

/// Structural and terminal flags of one chord in a chord sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChordFlags {
    pub structural: bool,
    pub terminal: bool,
}

/// Incremental chord-flag tracker for a growing chord sequence.
#[derive(Clone, Debug)]
pub struct ChordFlagTracker {
    tonality: Tonality,
    last: Option<HarmonicStep>,
}

impl ChordFlagTracker {
    pub fn new(tonality: Tonality) -> Self {
        ChordFlagTracker { tonality, last: None }
    }

    pub fn push(&mut self, chord: &Chord) -> ChordFlags {
        let step = HarmonicStep::of(chord, self.tonality);
        let terminal = self.last.is_some_and(|prev| is_terminal(&prev, &step));
        self.last = Some(step);
        ChordFlags {
            structural: structural_chord_flag(chord, self.tonality),
            terminal,
        }
    }
}

/// One line of the per-beat feature dump.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatAnnotation {
    pub beat: usize,
    pub weighted_notes: [bool; STEPS_PER_BEAT],
    pub factor: ChordMapEntry,
    pub terminal: bool,
    pub structural: bool,
}

/// Runs every extractor over a score exactly as a stream would see it.
pub fn annotate_score(score: &Score, map: &ChordMap, config: FeatureConfig) -> Vec<BeatAnnotation> {
    let mut tracker = FeatureTracker::new(score.time_signature, score.tonality, map, config);
    let terminal = terminal_chord_flags(&harmonic_steps(&score.chords, score.tonality));
    (0..score.beats())
        .map(|b| {
            let f = tracker.push_beat(score.melody_beat(b));
            BeatAnnotation {
                beat: b,
                weighted_notes: f.weighted,
                factor: f.factor,
                terminal: terminal[b],
                structural: structural_chord_flag(&score.chords[b], score.tonality),
            }
        })
        .collect()
}
