use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{read_file, Error, Result};

pub const QUALITY_COUNT: usize = 36;
pub const CHORDMAP_SIZE: usize = QUALITY_COUNT * 12;

const DEFAULT_QUALITIES: &str = include_str!("../../data/chordmap.json");

/// A chord quality: a named set of semitone offsets from the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quality {
    pub name: String,
    pub offsets: Vec<u8>,
    /// Offsets as a pitch-class mask rooted at C.
    mask: u16,
}

impl Quality {
    pub fn mask(&self) -> u16 {
        self.mask
    }
}

/// One of the 432 reference chords: a quality placed on a root.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChordMapEntry {
    pub quality: u8,
    pub root: u8,
}

impl ChordMapEntry {
    /// Dense index in `0..432`, quality-major.
    pub fn index(self) -> usize {
        self.quality as usize * 12 + self.root as usize
    }

    pub fn from_index(index: usize) -> Self {
        ChordMapEntry {
            quality: (index / 12) as u8,
            root: (index % 12) as u8,
        }
    }
}

/// Table of 36 qualities × 12 roots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChordMap {
    qualities: Vec<Quality>,
    masks: Vec<u16>,
}

pub(crate) fn rotate_mask(mask: u16, semitones: u8) -> u16 {
    let s = semitones % 12;
    ((mask << s) | (mask >> (12 - s))) & 0x0fff
}

impl ChordMap {
    /// Parses a JSON object mapping quality name to offset list. Key order is
    /// the quality index order.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let mut qualities = Vec::with_capacity(raw.len());
        for (name, value) in raw {
            let offsets: Vec<u8> = serde_json::from_value(value)?;
            qualities.push((name, offsets));
        }
        Self::new(qualities)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }

    pub fn new(qualities: Vec<(String, Vec<u8>)>) -> Result<Self> {
        if qualities.len() != QUALITY_COUNT {
            return Err(Error::ChordMap(format!(
                "expected {QUALITY_COUNT} qualities, found {}",
                qualities.len()
            )));
        }
        let mut parsed = Vec::with_capacity(QUALITY_COUNT);
        for (name, mut offsets) in qualities {
            offsets.sort_unstable();
            offsets.dedup();
            if offsets.first() != Some(&0) {
                return Err(Error::ChordMap(format!("quality {name:?} lacks offset 0")));
            }
            if let Some(bad) = offsets.iter().find(|&&o| o > 11) {
                return Err(Error::ChordMap(format!("quality {name:?} has offset {bad} > 11")));
            }
            let mask = offsets.iter().fold(0u16, |m, &o| m | 1 << o);
            if parsed.iter().any(|q: &Quality| q.mask == mask) {
                return Err(Error::ChordMap(format!("quality {name:?} duplicates another")));
            }
            parsed.push(Quality { name, offsets, mask });
        }
        let masks = (0..CHORDMAP_SIZE)
            .map(|i| {
                let e = ChordMapEntry::from_index(i);
                rotate_mask(parsed[e.quality as usize].mask, e.root)
            })
            .collect();
        Ok(ChordMap { qualities: parsed, masks })
    }

    /// The bundled 36-quality table.
    pub fn standard() -> &'static ChordMap {
        static MAP: OnceLock<ChordMap> = OnceLock::new();
        MAP.get_or_init(|| ChordMap::from_json(DEFAULT_QUALITIES).expect("bundled chord map is valid"))
    }

    pub fn qualities(&self) -> &[Quality] {
        &self.qualities
    }

    pub fn quality_index(&self, name: &str) -> Option<u8> {
        self.qualities.iter().position(|q| q.name == name).map(|i| i as u8)
    }

    /// Pitch-class mask of an entry.
    pub fn mask(&self, entry: ChordMapEntry) -> u16 {
        self.masks[entry.index()]
    }

    pub fn entries(&self) -> impl Iterator<Item = (ChordMapEntry, u16)> + '_ {
        self.masks
            .iter()
            .enumerate()
            .map(|(i, &m)| (ChordMapEntry::from_index(i), m))
    }

    /// Entries whose pitch-class set equals `mask`, in index order.
    pub fn exact(&self, mask: u16) -> impl Iterator<Item = ChordMapEntry> + '_ {
        self.entries().filter(move |&(_, m)| m == mask).map(|(e, _)| e)
    }

    pub fn name(&self, entry: ChordMapEntry) -> String {
        const NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];
        format!("{}{}", NAMES[entry.root as usize], self.qualities[entry.quality as usize].name)
    }

    /// Root-position voicing of an entry with the root at `base + root`.
    pub fn voicing(&self, entry: ChordMapEntry, base: u8) -> Vec<u8> {
        self.qualities[entry.quality as usize]
            .offsets
            .iter()
            .map(|o| base + entry.root + o)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn standard_map_has_432_distinct_entries() {
        let map = ChordMap::standard();
        assert_eq!(map.qualities().len(), 36);
        assert!(map.qualities().iter().all(|q| q.offsets[0] == 0));
        let entries: HashSet<_> = map.entries().collect();
        assert_eq!(entries.len(), CHORDMAP_SIZE);
        // As (pitch set, root) pairs the entries are distinct too, even though
        // symmetric qualities such as dim7 repeat pitch sets across roots.
        let keyed: HashSet<_> = map.entries().map(|(e, m)| (m, e.root)).collect();
        assert_eq!(keyed.len(), CHORDMAP_SIZE);
    }

    #[test]
    fn rejects_wrong_count_and_missing_root() {
        assert!(ChordMap::new(vec![("maj".into(), vec![0, 4, 7])]).is_err());
        let mut q: Vec<_> = ChordMap::standard()
            .qualities()
            .iter()
            .map(|q| (q.name.clone(), q.offsets.clone()))
            .collect();
        q[0].1 = vec![4, 7];
        assert!(ChordMap::new(q).is_err());
    }

    #[test]
    fn rotation_wraps() {
        assert_eq!(rotate_mask(0b1001_0001, 7), 1 << 7 | 1 << 11 | 1 << 2);
    }

    #[test]
    fn voicing_and_names() {
        let map = ChordMap::standard();
        let g7 = ChordMapEntry { quality: map.quality_index("dom7").unwrap(), root: 7 };
        assert_eq!(map.voicing(g7, 48), vec![55, 59, 62, 65]);
        assert_eq!(map.name(g7), "Gdom7");
    }
}
