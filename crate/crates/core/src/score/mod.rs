//! Symbolic music data model.
//!
//! Melody lives on a sixteenth-note grid and harmony on a quarter-note grid;
//! see [`Score`]. Chord identity, scale degrees and the chord edit cost are all
//! computed on pitch classes, so everything here is transposition-equivariant.

mod chord;
mod chordmap;
mod edit;
mod io;
mod sample;
mod vocab;

pub use chord::Chord;
pub use chordmap::{ChordMap, ChordMapEntry, Quality, CHORDMAP_SIZE, QUALITY_COUNT};
pub use edit::{circular_distance, edit_cost, nearest_chordmap_chord, WeightedPcs};
pub use io::{read_scores, write_scores, ScoreRecord};
pub use sample::{sample_score, unsample_melody, ChordEvent, NoteEvent, Score, STEPS_PER_BEAT};
pub use vocab::{ChordId, ChordVocab};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use crate::error::{Error, Result};

/// MIDI pitch, or the [`Pitch::REST`] sentinel for melodic silence.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pitch(u8);

impl Pitch {
    pub const REST: Pitch = Pitch(u8::MAX);

    pub fn new(value: i64) -> Result<Self> {
        if (0..=127).contains(&value) {
            Ok(Pitch(value as u8))
        } else {
            Err(Error::PitchRange(value))
        }
    }

    /// Panics on values above 127; meant for literals.
    pub const fn midi_const(value: u8) -> Self {
        assert!(value <= 127);
        Pitch(value)
    }

    pub fn from_option(value: Option<u8>) -> Result<Self> {
        match value {
            Some(v) => Self::new(v as i64),
            None => Ok(Self::REST),
        }
    }

    pub fn is_rest(self) -> bool {
        self.0 > 127
    }

    pub fn midi(self) -> Option<u8> {
        (!self.is_rest()).then_some(self.0)
    }

    pub fn class(self) -> Option<u8> {
        self.midi().map(|p| p % 12)
    }

    /// Shifts by `semitones`; rests stay rests, out-of-range results are `None`.
    pub fn transpose(self, semitones: i32) -> Option<Self> {
        match self.midi() {
            None => Some(self),
            Some(p) => Pitch::new(p as i64 + semitones as i64).ok(),
        }
    }
}

impl fmt::Debug for Pitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.midi() {
            Some(p) => write!(f, "{p}"),
            None => f.write_str("REST"),
        }
    }
}

impl Serialize for Pitch {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.midi().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pitch {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Option::<i64>::deserialize(d)?;
        match v {
            None => Ok(Pitch::REST),
            Some(p) => Pitch::new(p).map_err(serde::de::Error::custom),
        }
    }
}

/// Only 4/4 and 2/4 survive rhythm screening; the beat unit is always a quarter.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct TimeSignature {
    beats_per_bar: u8,
}

impl TimeSignature {
    pub const FOUR_FOUR: TimeSignature = TimeSignature { beats_per_bar: 4 };
    pub const TWO_FOUR: TimeSignature = TimeSignature { beats_per_bar: 2 };

    pub fn new(numerator: u32, denominator: u32) -> Result<Self> {
        match (numerator, denominator) {
            (4, 4) => Ok(Self::FOUR_FOUR),
            (2, 4) => Ok(Self::TWO_FOUR),
            _ => Err(Error::TimeSignature(numerator, denominator)),
        }
    }

    pub fn beats_per_bar(self) -> usize {
        self.beats_per_bar as usize
    }

    pub fn steps_per_bar(self) -> usize {
        self.beats_per_bar() * STEPS_PER_BEAT
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        Self::FOUR_FOUR
    }
}

impl fmt::Display for TimeSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/4", self.beats_per_bar)
    }
}

impl Serialize for TimeSignature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeSignature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let (num, den) = s
            .split_once('/')
            .ok_or_else(|| serde::de::Error::custom(format!("bad time signature {s:?}")))?;
        let parse = |x: &str| x.trim().parse::<u32>().map_err(serde::de::Error::custom);
        TimeSignature::new(parse(num)?, parse(den)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Tonality {
    pub tonic: u8,
    pub mode: Mode,
}

impl Tonality {
    pub const C_MAJOR: Tonality = Tonality { tonic: 0, mode: Mode::Major };
    pub const A_MINOR: Tonality = Tonality { tonic: 9, mode: Mode::Minor };

    pub fn new(tonic: u8, mode: Mode) -> Result<Self> {
        if tonic > 11 {
            return Err(Error::InvalidScore(format!("tonic pitch class {tonic} out of range")));
        }
        Ok(Tonality { tonic, mode })
    }

    pub fn transpose(self, semitones: i32) -> Self {
        Tonality {
            tonic: (self.tonic as i32 + semitones).rem_euclid(12) as u8,
            mode: self.mode,
        }
    }

    /// Pitch-class mask of the diatonic triad built on `degree`.
    pub fn triad_mask(self, degree: Degree) -> u16 {
        let scale = chord_degrees(self);
        let i = degree.index();
        [0, 2, 4]
            .iter()
            .fold(0u16, |m, step| m | 1 << scale[(i + step) % 7])
    }

    /// The tonic triad voiced in root position with its root at `base + tonic`.
    pub fn tonic_triad(self, base: u8) -> Chord {
        let third = match self.mode {
            Mode::Major => 4,
            Mode::Minor => 3,
        };
        let root = base + self.tonic;
        Chord::new(vec![root, root + third, root + 7]).expect("triad is non-empty")
    }
}

const MAJOR_STEPS: [u8; 6] = [2, 4, 5, 7, 9, 11];
const MINOR_STEPS: [u8; 6] = [2, 3, 5, 7, 8, 10];

/// Pitch classes of the seven scale degrees, tonic first.
pub fn chord_degrees(tonality: Tonality) -> [u8; 7] {
    let steps = match tonality.mode {
        Mode::Major => &MAJOR_STEPS,
        Mode::Minor => &MINOR_STEPS,
    };
    let mut out = [tonality.tonic; 7];
    for (slot, step) in out[1..].iter_mut().zip(steps) {
        *slot = (tonality.tonic + step) % 12;
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Degree {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
}

impl Degree {
    pub const ALL: [Degree; 7] = [
        Degree::I,
        Degree::II,
        Degree::III,
        Degree::IV,
        Degree::V,
        Degree::VI,
        Degree::VII,
    ];

    /// Zero-based position in the scale.
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ScaleDegree {
    pub degree: Degree,
    pub inverted: bool,
}

/// Degree of the chord's root in `tonality`, or `None` when the root is not
/// diatonic or the chord has no identifiable root.
pub fn classify_degree(chord: &Chord, tonality: Tonality) -> Option<ScaleDegree> {
    chord.quality()?;
    let root = chord.root();
    let pos = chord_degrees(tonality).iter().position(|&pc| pc == root)?;
    Some(ScaleDegree {
        degree: Degree::ALL[pos],
        inverted: chord.is_inverted(),
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatStrength {
    Strong,
    Weak,
    NextStrong,
}

impl BeatStrength {
    /// Accented beats: strong and next-strong.
    pub fn is_accent(self) -> bool {
        !matches!(self, BeatStrength::Weak)
    }
}

pub fn beat_strength(beat_in_bar: usize, ts: TimeSignature) -> Result<BeatStrength> {
    use BeatStrength::*;
    const FOUR: [BeatStrength; 4] = [Strong, Weak, NextStrong, Weak];
    const TWO: [BeatStrength; 2] = [Strong, Weak];
    let table: &[BeatStrength] = if ts.beats_per_bar() == 4 { &FOUR } else { &TWO };
    table.get(beat_in_bar).copied().ok_or(Error::BeatIndex {
        index: beat_in_bar,
        beats_per_bar: ts.beats_per_bar(),
    })
}
