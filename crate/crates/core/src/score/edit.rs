use serde::{Deserialize, Serialize};

use super::chordmap::{ChordMap, ChordMapEntry};

/// Pitch-class multiset with integer weights.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
pub struct WeightedPcs(pub [u32; 12]);

impl WeightedPcs {
    pub fn from_mask(mask: u16) -> Self {
        let mut w = [0; 12];
        for (pc, slot) in w.iter_mut().enumerate() {
            if mask & (1 << pc) != 0 {
                *slot = 1;
            }
        }
        WeightedPcs(w)
    }

    pub fn add(&mut self, pc: u8, weight: u32) {
        self.0[(pc % 12) as usize] += weight;
    }

    pub fn merge(&self, other: &WeightedPcs) -> WeightedPcs {
        let mut out = *self;
        for (a, b) in out.0.iter_mut().zip(other.0) {
            *a += b;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    pub fn mask(&self) -> u16 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0)
            .fold(0u16, |m, (pc, _)| m | 1 << pc)
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// Shortest distance between two pitch classes around the octave, 0..=6.
pub fn circular_distance(a: u8, b: u8) -> u32 {
    let d = (a as i32 - b as i32).rem_euclid(12) as u32;
    d.min(12 - d)
}

/// Minimum cost of editing `candidate` into the pitch-class set `target`.
///
/// Replacing a candidate class costs its weight times the circular distance,
/// deleting it costs its weight, inserting a missing target class costs 1.
/// Solved exactly by a subset DP over target classes.
pub fn edit_cost(candidate: &WeightedPcs, target: u16) -> u32 {
    let targets: Vec<u8> = (0..12u8).filter(|pc| target & (1 << pc) != 0).collect();
    let m = targets.len();
    let full = 1usize << m;
    let mut dp = vec![u32::MAX; full];
    let mut next = vec![u32::MAX; full];
    dp[0] = 0;
    for (pc, &w) in candidate.0.iter().enumerate() {
        if w == 0 {
            continue;
        }
        // A replacement over distance d >= 2 costs w*d >= w + 1, never less
        // than deleting and inserting, so only d <= 1 edges can be optimal.
        let reachable: Vec<(usize, u32)> = targets
            .iter()
            .enumerate()
            .filter_map(|(j, &t)| {
                let d = circular_distance(pc as u8, t);
                (d <= 1).then_some((j, w * d))
            })
            .collect();
        next.fill(u32::MAX);
        for mask in 0..full {
            let base = dp[mask];
            if base == u32::MAX {
                continue;
            }
            let del = base + w;
            if del < next[mask] {
                next[mask] = del;
            }
            for &(j, cost) in &reachable {
                if mask & (1 << j) == 0 {
                    let to = mask | 1 << j;
                    let c = base + cost;
                    if c < next[to] {
                        next[to] = c;
                    }
                }
            }
        }
        std::mem::swap(&mut dp, &mut next);
    }
    dp.iter()
        .enumerate()
        .filter(|(_, &c)| c != u32::MAX)
        .map(|(mask, &c)| c + (m - mask.count_ones() as usize) as u32)
        .min()
        .expect("empty matching is always feasible")
}

/// Exhaustive scan of the map for the cheapest entry. Ties go to the lower
/// quality index, then the lower root.
pub fn nearest_chordmap_chord(candidate: &WeightedPcs, map: &ChordMap) -> (ChordMapEntry, u32) {
    let mut best = (ChordMapEntry { quality: 0, root: 0 }, u32::MAX);
    for (entry, mask) in map.entries() {
        let cost = edit_cost(candidate, mask);
        if cost < best.1 {
            best = (entry, cost);
            if cost == 0 {
                break;
            }
        }
    }
    best
}
