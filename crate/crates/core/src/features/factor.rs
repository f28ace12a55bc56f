use std::collections::HashMap;

use crate::score::{nearest_chordmap_chord, ChordMap, ChordMapEntry, Mode, Tonality, WeightedPcs};

/// Weight of a weighted note in the pitch statistics; other notes count 1.
pub const WEIGHTED_NOTE_WEIGHT: u32 = 2;

/// Per-step record of the greedy splice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpliceStep {
    pub w_old: u32,
    pub w_new: u32,
    pub absorbed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpliceResult {
    /// Number of beats in the segment, current beat included.
    pub beats: usize,
    pub stats: WeightedPcs,
    pub entry: ChordMapEntry,
    pub cost: u32,
    /// Cost of the current beat alone.
    pub current_cost: u32,
    /// Costs of the absorbed beats alone, nearest first.
    pub absorbed_costs: Vec<u32>,
    pub steps: Vec<SpliceStep>,
}

impl SpliceResult {
    /// w(segment) <= w(current) + sum over absorbed beats of (w(beat) + 1).
    pub fn cost_bound_holds(&self) -> bool {
        let bound: u32 = self.current_cost + self.absorbed_costs.iter().map(|c| c + 1).sum::<u32>();
        self.cost <= bound
    }
}

/// Memoized nearest-entry lookup.
#[derive(Clone, Debug)]
pub struct Nearest<'m> {
    map: &'m ChordMap,
    memo: HashMap<WeightedPcs, (ChordMapEntry, u32)>,
}

impl<'m> Nearest<'m> {
    pub fn new(map: &'m ChordMap) -> Self {
        Nearest { map, memo: HashMap::new() }
    }

    pub fn map(&self) -> &'m ChordMap {
        self.map
    }

    pub fn get(&mut self, stats: &WeightedPcs) -> (ChordMapEntry, u32) {
        if let Some(&hit) = self.memo.get(stats) {
            return hit;
        }
        let found = nearest_chordmap_chord(stats, self.map);
        if self.memo.len() > 1 << 16 {
            self.memo.clear();
        }
        self.memo.insert(*stats, found);
        found
    }

    pub fn cost(&mut self, stats: &WeightedPcs) -> u32 {
        self.get(stats).1
    }
}

/// Greedy backward splice over per-beat statistics; the last element of
/// `history` is the current beat. Absorbs the preceding beat while the merged
/// cost does not exceed the separate costs plus one, stopping at the first
/// increase or after `max_beats` beats.
pub fn splice_segments(history: &[WeightedPcs], nearest: &mut Nearest<'_>, max_beats: usize) -> SpliceResult {
    let (current, rest) = history.split_last().expect("history holds the current beat");
    let mut stats = *current;
    let (mut entry, current_cost) = nearest.get(&stats);
    let mut cost = current_cost;
    let mut absorbed_costs = Vec::new();
    let mut steps = Vec::new();
    for beat in rest.iter().rev() {
        if absorbed_costs.len() + 1 >= max_beats {
            break;
        }
        let beat_cost = nearest.cost(beat);
        let w_old = cost + beat_cost + 1;
        let merged = stats.merge(beat);
        let (merged_entry, w_new) = nearest.get(&merged);
        let absorbed = w_new <= w_old;
        steps.push(SpliceStep { w_old, w_new, absorbed });
        if !absorbed {
            break;
        }
        stats = merged;
        entry = merged_entry;
        cost = w_new;
        absorbed_costs.push(beat_cost);
    }
    SpliceResult {
        beats: absorbed_costs.len() + 1,
        stats,
        entry,
        cost,
        current_cost,
        absorbed_costs,
        steps,
    }
}

/// The ChordMap entry for the tonic triad of `tonality`.
pub fn tonic_entry(tonality: Tonality, map: &ChordMap) -> ChordMapEntry {
    let name = match tonality.mode {
        Mode::Major => "maj",
        Mode::Minor => "min",
    };
    let quality = map.quality_index(name).unwrap_or(0);
    ChordMapEntry { quality, root: tonality.tonic }
}

/// Decides a beat's weighted factor from its splice result.
///
/// A multi-beat segment yields its nearest entry. A single-beat segment or an
/// all-rest beat inherits the previous factor; with no previous factor the
/// beat's own statistics are used, or the tonic triad if it is silent.
pub fn choose_factor(
    splice: &SpliceResult,
    current_is_silent: bool,
    previous: Option<ChordMapEntry>,
    tonality: Tonality,
    map: &ChordMap,
) -> ChordMapEntry {
    match previous {
        Some(prev) if current_is_silent || splice.beats == 1 => prev,
        Some(_) => splice.entry,
        None if current_is_silent => tonic_entry(tonality, map),
        None => splice.entry,
    }
}
