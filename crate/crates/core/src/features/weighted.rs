use crate::score::{beat_strength, BeatStrength, Pitch, TimeSignature, STEPS_PER_BEAT};

/// Sixteenth steps a weak-beat note must last to count as a syncopation:
/// one and a half beats, reaching half-way into the next accented beat.
pub const SYNCOPATION_STEPS: usize = STEPS_PER_BEAT * 3 / 2;

/// A melody note located on the sixteenth grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoteDescriptor {
    pub pitch: Pitch,
    pub onset_step: usize,
    pub duration_steps: usize,
    /// Strength of the beat containing the onset.
    pub strength: BeatStrength,
}

impl NoteDescriptor {
    pub fn onset_beat(&self) -> f64 {
        self.onset_step as f64 / STEPS_PER_BEAT as f64
    }

    /// Duration in beats, the L(N) of the long-note rule.
    pub fn duration_beats(&self) -> f64 {
        self.duration_steps as f64 / STEPS_PER_BEAT as f64
    }

    pub fn end_step(&self) -> usize {
        self.onset_step + self.duration_steps
    }

    pub fn is_accent(&self) -> bool {
        self.strength.is_accent()
    }

    pub fn is_syncopation(&self) -> bool {
        self.strength == BeatStrength::Weak && self.duration_steps >= SYNCOPATION_STEPS
    }
}

/// Splits `melody[start..end]` into notes (runs of one non-rest pitch). A run
/// that began before `start` keeps its true onset; every run is cut at `end`.
pub fn segment_notes(melody: &[Pitch], start: usize, end: usize, ts: TimeSignature) -> Vec<NoteDescriptor> {
    let end = end.min(melody.len());
    let mut out = Vec::new();
    let mut i = start;
    while i < end {
        let p = melody[i];
        let mut j = i + 1;
        while j < end && melody[j] == p {
            j += 1;
        }
        if !p.is_rest() {
            let mut onset = i;
            while onset > 0 && melody[onset - 1] == p {
                onset -= 1;
            }
            let beat = onset / STEPS_PER_BEAT;
            let strength = beat_strength(beat % ts.beats_per_bar(), ts).expect("beat within bar");
            out.push(NoteDescriptor {
                pitch: p,
                onset_step: onset,
                duration_steps: j - onset,
                strength,
            });
        }
        i = j;
    }
    out
}

/// Index of the long note: the longest in the window, latest onset on ties.
pub fn long_note_index(window: &[NoteDescriptor]) -> Option<usize> {
    window
        .iter()
        .enumerate()
        .max_by_key(|(_, n)| (n.duration_steps, n.onset_step))
        .map(|(i, _)| i)
}

/// Weighted-note flag per note of a one-bar sliding window: accents that are
/// not syncopations, plus unaccented syncopations that are the long note.
pub fn weighted_notes(window: &[NoteDescriptor]) -> Vec<bool> {
    let long = long_note_index(window);
    window
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let t = n.is_accent();
            let c = n.is_syncopation();
            let l = Some(i) == long;
            (t && !c) || (!t && c && l)
        })
        .collect()
}
