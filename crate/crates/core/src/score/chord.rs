use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use super::chordmap::ChordMap;
use crate::error::{Error, Result};

/// A sounding chord: concrete MIDI pitches sorted low to high, plus the root
/// and ChordMap quality recovered from its pitch-class set.
///
/// Equality and hashing look at the pitches only; root and quality are
/// derived from them.
#[derive(Clone)]
pub struct Chord {
    pitches: Vec<u8>,
    root: u8,
    quality: Option<u8>,
}

impl Chord {
    /// Identifies the chord against the standard ChordMap.
    pub fn new(pitches: impl Into<Vec<u8>>) -> Result<Self> {
        Self::with_map(pitches, ChordMap::standard())
    }

    pub fn with_map(pitches: impl Into<Vec<u8>>, map: &ChordMap) -> Result<Self> {
        let mut pitches = pitches.into();
        if pitches.is_empty() {
            return Err(Error::EmptyChord);
        }
        if let Some(&p) = pitches.iter().find(|&&p| p > 127) {
            return Err(Error::PitchRange(p as i64));
        }
        pitches.sort_unstable();
        pitches.dedup();
        let mask = pitches.iter().fold(0u16, |m, &p| m | 1 << (p % 12));
        let bass = pitches[0] % 12;
        // Prefer a reading whose root is the bass; otherwise the lowest entry.
        let mut best = None;
        for entry in map.exact(mask) {
            if entry.root == bass {
                best = Some(entry);
                break;
            }
            best.get_or_insert(entry);
        }
        let (root, quality) = match best {
            Some(e) => (e.root, Some(e.quality)),
            None => (bass, None),
        };
        Ok(Chord { pitches, root, quality })
    }

    pub fn pitches(&self) -> &[u8] {
        &self.pitches
    }

    pub fn root(&self) -> u8 {
        self.root
    }

    /// ChordMap quality index, `None` for chords outside the map.
    pub fn quality(&self) -> Option<u8> {
        self.quality
    }

    pub fn bass(&self) -> u8 {
        self.pitches[0]
    }

    pub fn is_inverted(&self) -> bool {
        self.bass() % 12 != self.root
    }

    pub fn pc_mask(&self) -> u16 {
        self.pitches.iter().fold(0u16, |m, &p| m | 1 << (p % 12))
    }

    pub fn contains_class(&self, pc: u8) -> bool {
        self.pc_mask() & (1 << (pc % 12)) != 0
    }

    pub fn mean_pitch(&self) -> f64 {
        self.pitches.iter().map(|&p| p as f64).sum::<f64>() / self.pitches.len() as f64
    }

    pub fn transpose(&self, semitones: i32) -> Result<Self> {
        let shifted: Result<Vec<u8>> = self
            .pitches
            .iter()
            .map(|&p| {
                let q = p as i32 + semitones;
                if (0..=127).contains(&q) {
                    Ok(q as u8)
                } else {
                    Err(Error::PitchRange(q as i64))
                }
            })
            .collect();
        Chord::new(shifted?)
    }
}

impl PartialEq for Chord {
    fn eq(&self, other: &Self) -> bool {
        self.pitches == other.pitches
    }
}

impl Eq for Chord {}

impl std::hash::Hash for Chord {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.pitches.hash(state);
    }
}

impl PartialOrd for Chord {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Chord {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.pitches.cmp(&other.pitches)
    }
}

impl fmt::Debug for Chord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Chord{:?}", self.pitches)
    }
}

impl Serialize for Chord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.pitches.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Chord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pitches = Vec::<u8>::deserialize(d)?;
        Chord::new(pitches).map_err(serde::de::Error::custom)
    }
}
