use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::{cello, cello_source, resolve, PatternId, PatternLibrary, TrackEvent};
use crate::features::ChordFlagTracker;
use crate::score::{Chord, Pitch, TimeSignature, Tonality};

/// Bars of melody inspected by the section classifier.
pub const SECTION_BARS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TextureConfig {
    /// Pitch-change rate at or above which a passage counts as chorus.
    pub chorus_threshold: f64,
    /// How far back, in beats, a cadence can trigger a decorative bar.
    pub cadence_window_beats: usize,
}

impl Default for TextureConfig {
    fn default() -> Self {
        TextureConfig {
            chorus_threshold: 0.4,
            cadence_window_beats: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Verse,
    Chorus,
}

/// Verse or chorus from the pitch-change rate of the samples: the share of
/// adjacent sounding pairs whose pitches differ. Fewer than
/// [`SECTION_BARS`] bars of input counts as verse.
pub fn section_classify(melody: &[Pitch], ts: TimeSignature, threshold: f64) -> Section {
    if melody.len() < SECTION_BARS * ts.steps_per_bar() {
        return Section::Verse;
    }
    let mut pairs = 0usize;
    let mut changes = 0usize;
    for w in melody.windows(2) {
        if w[0].is_rest() || w[1].is_rest() {
            continue;
        }
        pairs += 1;
        if w[0] != w[1] {
            changes += 1;
        }
    }
    let rate = if pairs == 0 { 0.0 } else { changes as f64 / pairs as f64 };
    if rate >= threshold {
        Section::Chorus
    } else {
        Section::Verse
    }
}

const VERSE_ROTATION: [[PatternId; 2]; 3] = [
    [PatternId::VersePiano1, PatternId::VerseGuitar],
    [PatternId::VersePiano2, PatternId::VerseGuitar],
    [PatternId::VersePiano3, PatternId::VerseGuitar],
];
const CHORUS_ROTATION: [[PatternId; 2]; 2] = [
    [PatternId::ChorusPiano1, PatternId::ChorusGuitar],
    [PatternId::ChorusPiano2, PatternId::ChorusGuitar],
];

/// Patterns sounding together for a stretch of bars.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub patterns: Vec<PatternId>,
    pub bars: usize,
}

/// Rotation state. A decorative bar suspends the rotation; a section change
/// restarts it at the first entry of the new section.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectionState {
    pub section: Section,
    pub rotation_index: usize,
    pub bars_into_pattern: usize,
    pub slot: Option<Slot>,
}

impl Default for SectionState {
    fn default() -> Self {
        SectionState {
            section: Section::Verse,
            rotation_index: 0,
            bars_into_pattern: 0,
            slot: None,
        }
    }
}

impl SectionState {
    /// True when the current slot has run out and a new one must be chosen.
    pub fn at_boundary(&self) -> bool {
        self.slot.as_ref().is_none_or(|s| self.bars_into_pattern >= s.bars)
    }

    /// Chooses the next slot.
    pub fn select(&mut self, section: Section, cadence: bool) -> &Slot {
        let slot = if cadence {
            Slot {
                patterns: vec![PatternId::Decorative],
                bars: PatternId::Decorative.length_bars(),
            }
        } else {
            if section != self.section {
                self.section = section;
                self.rotation_index = 0;
            }
            let patterns = match section {
                Section::Verse => VERSE_ROTATION[self.rotation_index % VERSE_ROTATION.len()].to_vec(),
                Section::Chorus => CHORUS_ROTATION[self.rotation_index % CHORUS_ROTATION.len()].to_vec(),
            };
            self.rotation_index += 1;
            Slot {
                bars: patterns[0].length_bars(),
                patterns,
            }
        };
        self.bars_into_pattern = 0;
        self.slot.insert(slot)
    }
}

/// What was rendered for one beat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatRender {
    pub beat: usize,
    pub section: Section,
    pub patterns: Vec<PatternId>,
    pub events: Vec<TrackEvent>,
}

/// Streaming texture state machine; call [`TextureEngine::render_beat`] once
/// per beat, in order.
#[derive(Clone, Debug)]
pub struct TextureEngine {
    library: Arc<PatternLibrary>,
    ts: TimeSignature,
    config: TextureConfig,
    state: SectionState,
    flags: ChordFlagTracker,
    terminal: Vec<bool>,
    consumed_cadence: Option<usize>,
    slot_start: usize,
    next_beat: usize,
}

impl TextureEngine {
    pub fn new(library: Arc<PatternLibrary>, ts: TimeSignature, tonality: Tonality, config: TextureConfig) -> Self {
        TextureEngine {
            library,
            ts,
            config,
            state: SectionState::default(),
            flags: ChordFlagTracker::new(tonality),
            terminal: Vec::new(),
            consumed_cadence: None,
            slot_start: 0,
            next_beat: 0,
        }
    }

    pub fn state(&self) -> &SectionState {
        &self.state
    }

    /// Latest not-yet-used cadence within the look-back window before `beat`.
    fn fresh_cadence(&self, beat: usize) -> Option<usize> {
        let from = beat.saturating_sub(self.config.cadence_window_beats);
        (from..beat)
            .rev()
            .find(|&b| self.terminal[b])
            .filter(|&b| self.consumed_cadence.is_none_or(|c| b > c))
    }

    /// Renders beat `beat` over `chord`. `melody` holds every sample received
    /// so far; only whole bars before `beat` are read.
    pub fn render_beat(&mut self, beat: usize, chord: &Chord, melody: &[Pitch]) -> BeatRender {
        assert_eq!(beat, self.next_beat, "beats must be rendered in order");
        self.next_beat += 1;
        let bpb = self.ts.beats_per_bar();
        if beat.is_multiple_of(bpb) && self.state.at_boundary() {
            let cadence = self.fresh_cadence(beat);
            if cadence.is_some() {
                self.consumed_cadence = cadence;
            }
            let bar = beat / bpb;
            let section = if bar >= SECTION_BARS {
                let spb = self.ts.steps_per_bar();
                let end = (bar * spb).min(melody.len());
                let start = end.saturating_sub(SECTION_BARS * spb);
                section_classify(&melody[start..end], self.ts, self.config.chorus_threshold)
            } else {
                Section::Verse
            };
            self.state.select(section, cadence.is_some());
            self.slot_start = beat;
        }
        let slot = self.state.slot.clone().expect("a slot is chosen on the first beat");
        let bar_start = beat - beat % bpb;
        let mut events = Vec::new();
        for &id in &slot.patterns {
            let pattern = self.library.get(id);
            let local = |b: usize| (b - self.slot_start) % pattern.cycle_beats;
            let l = local(beat);
            for n in pattern.notes_in_beat(l) {
                events.push(resolve(n, chord, beat as f64 + n.start - l as f64));
            }
            let bar_notes = (bar_start..bar_start + bpb).flat_map(|b| {
                let lb = local(b);
                pattern.notes_in_beat(lb).map(move |n| (n, b as f64 + n.start - lb as f64))
            });
            if let Some((n, onset)) = cello_source(bar_notes) {
                if onset >= beat as f64 && onset < (beat + 1) as f64 {
                    events.push(cello(&resolve(n, chord, onset)));
                }
            }
        }
        let flags = self.flags.push(chord);
        self.terminal.push(flags.terminal);
        if beat % bpb == bpb - 1 {
            self.state.bars_into_pattern += 1;
        }
        BeatRender {
            beat,
            section: self.state.section,
            patterns: slot.patterns,
            events,
        }
    }
}
