use serde::{Deserialize, Serialize};

use super::{Chord, Pitch, TimeSignature, Tonality};
use crate::error::{Error, Result};

/// Melody samples per quarter-note beat.
pub const STEPS_PER_BEAT: usize = 4;

const GRID_EPS: f64 = 1e-6;

/// A melody note; times in beats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: f64,
    pub duration: f64,
}

/// A chord held over a span; times in beats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChordEvent {
    pub pitches: Vec<u8>,
    pub onset: f64,
    pub duration: f64,
}

/// Two parallel arrays: one melody pitch per sixteenth, one chord per beat.
#[derive(Clone, Debug, PartialEq)]
pub struct Score {
    pub id: String,
    pub bpm: f64,
    pub time_signature: TimeSignature,
    pub tonality: Tonality,
    pub melody: Vec<Pitch>,
    pub chords: Vec<Chord>,
}

impl Score {
    pub fn new(
        id: impl Into<String>,
        bpm: f64,
        time_signature: TimeSignature,
        tonality: Tonality,
        melody: Vec<Pitch>,
        chords: Vec<Chord>,
    ) -> Result<Self> {
        let score = Score {
            id: id.into(),
            bpm,
            time_signature,
            tonality,
            melody,
            chords,
        };
        score.validate()?;
        Ok(score)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chords.is_empty() {
            return Err(Error::InvalidScore("empty chord array".into()));
        }
        if self.melody.len() != STEPS_PER_BEAT * self.chords.len() {
            return Err(Error::InvalidScore(format!(
                "melody has {} samples for {} beats",
                self.melody.len(),
                self.chords.len()
            )));
        }
        if !self.chords.len().is_multiple_of(self.time_signature.beats_per_bar()) {
            return Err(Error::InvalidScore("incomplete final bar".into()));
        }
        if !(self.bpm.is_finite() && self.bpm > 0.0) {
            return Err(Error::InvalidScore(format!("bpm {}", self.bpm)));
        }
        Ok(())
    }

    pub fn beats(&self) -> usize {
        self.chords.len()
    }

    pub fn bars(&self) -> usize {
        self.beats() / self.time_signature.beats_per_bar()
    }

    pub fn melody_beat(&self, beat: usize) -> &[Pitch] {
        &self.melody[beat * STEPS_PER_BEAT..(beat + 1) * STEPS_PER_BEAT]
    }
}

fn on_grid(value: f64, per_beat: f64) -> Option<usize> {
    let scaled = value * per_beat;
    let rounded = scaled.round();
    ((scaled - rounded).abs() < GRID_EPS && rounded >= 0.0).then_some(rounded as usize)
}

/// Samples note and chord events onto the two grids. Melody gaps become
/// REST; beats with no sounding chord hold the previous chord (the first
/// chord covers any leading gap). The piece is padded with rests to a whole
/// number of bars.
pub fn sample_score(
    id: impl Into<String>,
    notes: &[NoteEvent],
    chords: &[ChordEvent],
    bpm: f64,
    time_signature: TimeSignature,
    tonality: Tonality,
) -> Result<Score> {
    let steps = STEPS_PER_BEAT as f64;
    let mut note_spans = Vec::with_capacity(notes.len());
    for n in notes {
        let start = on_grid(n.onset, steps).ok_or(Error::Unquantized { onset: n.onset, grid: "sixteenth" })?;
        let len = on_grid(n.duration, steps)
            .filter(|&l| l > 0)
            .ok_or(Error::Unquantized { onset: n.onset, grid: "sixteenth" })?;
        note_spans.push((start, start + len, Pitch::new(n.pitch as i64)?));
    }
    let mut chord_spans = Vec::with_capacity(chords.len());
    for c in chords {
        if c.duration < 1.0 - GRID_EPS {
            return Err(Error::ShortChord { onset: c.onset, duration: c.duration });
        }
        let start = on_grid(c.onset, 1.0).ok_or(Error::Unquantized { onset: c.onset, grid: "beat" })?;
        let len = on_grid(c.duration, 1.0).ok_or(Error::Unquantized { onset: c.onset, grid: "beat" })?;
        chord_spans.push((start, start + len, Chord::new(c.pitches.clone())?));
    }
    if chord_spans.is_empty() {
        return Err(Error::NoChords);
    }

    let end_steps = note_spans
        .iter()
        .map(|&(_, e, _)| e)
        .chain(chord_spans.iter().map(|&(_, e, _)| e * STEPS_PER_BEAT))
        .max()
        .unwrap_or(0);
    let bar_steps = time_signature.steps_per_bar();
    let total_steps = end_steps.div_ceil(bar_steps).max(1) * bar_steps;
    let total_beats = total_steps / STEPS_PER_BEAT;

    let mut melody = vec![Pitch::REST; total_steps];
    note_spans.sort_by_key(|&(s, _, _)| s);
    for (s, e, p) in note_spans {
        // Later onsets override sustains of earlier notes.
        melody[s..e].fill(p);
    }

    chord_spans.sort_by_key(|(s, _, _)| *s);
    let mut slots: Vec<Option<Chord>> = vec![None; total_beats];
    for (s, e, c) in &chord_spans {
        for slot in &mut slots[*s..*e] {
            *slot = Some(c.clone());
        }
    }
    let first = chord_spans[0].2.clone();
    let mut held = first;
    let chords_out = slots
        .into_iter()
        .map(|slot| {
            if let Some(c) = slot {
                held = c;
            }
            held.clone()
        })
        .collect();

    Score::new(id, bpm, time_signature, tonality, melody, chords_out)
}

/// Collapses runs of equal non-rest samples back into note events.
pub fn unsample_melody(melody: &[Pitch]) -> Vec<NoteEvent> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < melody.len() {
        let p = melody[i];
        let mut j = i + 1;
        while j < melody.len() && melody[j] == p {
            j += 1;
        }
        if let Some(pitch) = p.midi() {
            out.push(NoteEvent {
                pitch,
                onset: i as f64 / STEPS_PER_BEAT as f64,
                duration: (j - i) as f64 / STEPS_PER_BEAT as f64,
            });
        }
        i = j;
    }
    out
}
