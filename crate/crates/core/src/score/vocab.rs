use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::{Chord, Score};

/// Dense chord label. Id 0 is reserved for unknown chords.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChordId(pub u32);

impl ChordId {
    pub const UNK: ChordId = ChordId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Closed chord vocabulary: UNK plus every chord observed in a corpus, in
/// first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Chord>", into = "Vec<Chord>")]
pub struct ChordVocab {
    chords: Vec<Chord>,
    index: HashMap<Chord, ChordId>,
}

impl From<Vec<Chord>> for ChordVocab {
    fn from(chords: Vec<Chord>) -> Self {
        let mut v = ChordVocab::default();
        for c in chords {
            v.insert(c);
        }
        v
    }
}

impl From<ChordVocab> for Vec<Chord> {
    fn from(v: ChordVocab) -> Self {
        v.chords
    }
}

impl ChordVocab {
    pub fn from_scores<'a>(scores: impl IntoIterator<Item = &'a Score>) -> Self {
        let mut v = ChordVocab::default();
        for s in scores {
            for c in &s.chords {
                v.insert(c.clone());
            }
        }
        v
    }

    pub fn insert(&mut self, chord: Chord) -> ChordId {
        if let Some(&id) = self.index.get(&chord) {
            return id;
        }
        let id = ChordId(self.chords.len() as u32 + 1);
        self.index.insert(chord.clone(), id);
        self.chords.push(chord);
        id
    }

    pub fn id(&self, chord: &Chord) -> ChordId {
        self.index.get(chord).copied().unwrap_or(ChordId::UNK)
    }

    pub fn chord(&self, id: ChordId) -> Option<&Chord> {
        id.index().checked_sub(1).and_then(|i| self.chords.get(i))
    }

    /// Number of labels including UNK.
    pub fn len(&self) -> usize {
        self.chords.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.chords.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ChordId, &Chord)> {
        self.chords.iter().enumerate().map(|(i, c)| (ChordId(i as u32 + 1), c))
    }
}
