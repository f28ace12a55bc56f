//! Objective accompaniment metrics.
//!
//! Melody-facing metrics walk the sixteenth grid and compare each sounding
//! melody sample with the chord of its beat. Chord-only metrics read the
//! beat-grid chord array; CPI and CIOI first merge repeated beats into chord
//! events.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

use crate::features::{harmonic_steps, terminal_chord_flags, FeatureConfig, FeatureTracker};
use crate::score::{edit_cost, Chord, ChordMap, ChordMapEntry, Degree, Pitch, Score, Tonality, WeightedPcs, STEPS_PER_BEAT};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cpi: f64,
    pub cioi: f64,
    pub ctnctr: f64,
    pub pcs: f64,
    pub mctd: f64,
    pub che: f64,
    pub cs: f64,
    pub hs: f64,
    pub wmch: f64,
}

impl MetricReport {
    pub const NAMES: [&'static str; 9] = ["cpi", "cioi", "ctnctr", "pcs", "mctd", "che", "cs", "hs", "wmch"];

    pub fn values(&self) -> [f64; 9] {
        [
            self.cpi, self.cioi, self.ctnctr, self.pcs, self.mctd, self.che, self.cs, self.hs, self.wmch,
        ]
    }

    pub fn from_values(v: [f64; 9]) -> Self {
        MetricReport {
            cpi: v[0],
            cioi: v[1],
            ctnctr: v[2],
            pcs: v[3],
            mctd: v[4],
            che: v[5],
            cs: v[6],
            hs: v[7],
            wmch: v[8],
        }
    }

    /// Field-wise `self - reference`.
    pub fn difference(&self, reference: &MetricReport) -> MetricReport {
        let (a, b) = (self.values(), reference.values());
        MetricReport::from_values(std::array::from_fn(|i| a[i] - b[i]))
    }

    /// Field-wise mean; zero for an empty slice.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        if reports.is_empty() {
            return MetricReport::default();
        }
        let mut sum = [0.0; 9];
        for r in reports {
            for (s, v) in sum.iter_mut().zip(r.values()) {
                *s += v;
            }
        }
        MetricReport::from_values(sum.map(|s| s / reports.len() as f64))
    }
}

/// Chord events: `(chord, onset beat, beats)` with repeated beats merged.
pub fn chord_events(chords: &[Chord]) -> Vec<(&Chord, usize, usize)> {
    let mut out: Vec<(&Chord, usize, usize)> = Vec::new();
    for (beat, chord) in chords.iter().enumerate() {
        match out.last_mut() {
            Some((last, _, len)) if *last == chord => *len += 1,
            _ => out.push((chord, beat, 1)),
        }
    }
    out
}

/// Chord progression interval: mean absolute difference of the mean pitches
/// of consecutive chord events.
pub fn cpi(chords: &[Chord]) -> f64 {
    let events = chord_events(chords);
    if events.len() < 2 {
        return 0.0;
    }
    let total: f64 = events.windows(2).map(|w| (w[1].0.mean_pitch() - w[0].0.mean_pitch()).abs()).sum();
    total / (events.len() - 1) as f64
}

/// Chord inter-onset interval in beats between consecutive chord events.
pub fn cioi(chords: &[Chord]) -> f64 {
    let events = chord_events(chords);
    if events.len() < 2 {
        return 0.0;
    }
    let total: usize = events.windows(2).map(|w| w[1].1 - w[0].1).sum();
    total as f64 / (events.len() - 1) as f64
}

fn sounding(melody: &[Pitch]) -> impl Iterator<Item = (usize, u8)> + '_ {
    melody.iter().enumerate().filter_map(|(s, p)| p.midi().map(|m| (s, m)))
}

/// Fraction of sounding melody samples whose pitch class is in the chord.
/// A silent melody scores 0.
pub fn ctnctr(melody: &[Pitch], chords: &[Chord]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (s, m) in sounding(melody) {
        total += 1;
        if chords[s / STEPS_PER_BEAT].contains_class(m % 12) {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Consonance score of one melody/chord-tone interval.
pub fn interval_score(melody: u8, chord_tone: u8) -> i32 {
    match (melody as i32 - chord_tone as i32).unsigned_abs() % 12 {
        0 | 3 | 4 | 7 | 8 | 9 => 1,
        5 => 0,
        _ => -1,
    }
}

/// Pitch consonance score averaged over every (melody sample, chord tone) pair.
pub fn pcs(melody: &[Pitch], chords: &[Chord]) -> f64 {
    let mut sum = 0i64;
    let mut pairs = 0usize;
    for (s, m) in sounding(melody) {
        for &c in chords[s / STEPS_PER_BEAT].pitches() {
            sum += interval_score(m, c) as i64;
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum as f64 / pairs as f64
    }
}

const CENTROID_RADII: [f64; 3] = [1.0, 1.0, 0.5];
const CENTROID_ANGLES: [f64; 3] = [7.0 * PI / 6.0, 3.0 * PI / 2.0, 2.0 * PI / 3.0];

/// 6-D tonal centroid of a pitch-class profile: projections onto the circle
/// of fifths, minor thirds and major thirds, normalized by total mass.
pub fn tonal_centroid(profile: &[f64; 12]) -> [f64; 6] {
    let mass: f64 = profile.iter().sum();
    let mut out = [0.0; 6];
    if mass == 0.0 {
        return out;
    }
    for (pc, &w) in profile.iter().enumerate() {
        for k in 0..3 {
            let angle = pc as f64 * CENTROID_ANGLES[k];
            out[2 * k] += w * CENTROID_RADII[k] * angle.sin();
            out[2 * k + 1] += w * CENTROID_RADII[k] * angle.cos();
        }
    }
    out.map(|v| v / mass)
}

fn distance(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn chord_profile(chord: &Chord) -> [f64; 12] {
    let mask = chord.pc_mask();
    std::array::from_fn(|pc| if mask & (1 << pc) != 0 { 1.0 } else { 0.0 })
}

/// Melody-chord tonal distance averaged over sounding melody samples.
pub fn mctd(melody: &[Pitch], chords: &[Chord]) -> f64 {
    let mut melody_centroids = [[0.0; 6]; 12];
    for (pc, c) in melody_centroids.iter_mut().enumerate() {
        let mut profile = [0.0; 12];
        profile[pc] = 1.0;
        *c = tonal_centroid(&profile);
    }
    let mut cache: HashMap<u16, [f64; 6]> = HashMap::new();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (s, m) in sounding(melody) {
        let chord = &chords[s / STEPS_PER_BEAT];
        let c = *cache.entry(chord.pc_mask()).or_insert_with(|| tonal_centroid(&chord_profile(chord)));
        sum += distance(&melody_centroids[(m % 12) as usize], &c);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Chord histogram entropy (natural log) over pitch-class-set labels.
pub fn che(chords: &[Chord]) -> f64 {
    let mut hist: HashMap<u16, usize> = HashMap::new();
    for c in chords {
        *hist.entry(c.pc_mask()).or_default() += 1;
    }
    let n = chords.len() as f64;
    let mut counts: Vec<usize> = hist.into_values().collect();
    counts.sort_unstable();
    -counts
        .into_iter()
        .map(|k| {
            let p = k as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

const STRUCTURAL_DEGREES: [Degree; 4] = [Degree::I, Degree::II, Degree::IV, Degree::V];

/// Chord structure: mean edit cost from each chord to the nearest of the
/// I, II, IV and V triads of the key.
pub fn cs(chords: &[Chord], tonality: Tonality) -> f64 {
    if chords.is_empty() {
        return 0.0;
    }
    let targets = STRUCTURAL_DEGREES.map(|d| tonality.triad_mask(d));
    let total: u32 = chords
        .iter()
        .map(|c| {
            let stats = WeightedPcs::from_mask(c.pc_mask());
            targets.iter().map(|&t| edit_cost(&stats, t)).min().unwrap()
        })
        .sum();
    total as f64 / chords.len() as f64
}

/// Harmonic structure: fraction of beats whose chord completes a cadence.
pub fn hs(chords: &[Chord], tonality: Tonality) -> f64 {
    if chords.is_empty() {
        return 0.0;
    }
    let flags = terminal_chord_flags(&harmonic_steps(chords, tonality));
    flags.iter().filter(|&&f| f).count() as f64 / chords.len() as f64
}

/// Weighted factor of every beat, as a stream would compute it.
pub fn beat_factors(score: &Score, map: &ChordMap) -> Vec<ChordMapEntry> {
    let mut tracker = FeatureTracker::new(score.time_signature, score.tonality, map, FeatureConfig::default());
    (0..score.beats()).map(|b| tracker.push_beat(score.melody_beat(b)).factor).collect()
}

/// Mean edit cost from each chord to the weighted factor of the preceding
/// beat. `factors[b]` belongs to the melody of beat `b`; beat 0 has no
/// predecessor and is skipped.
pub fn wmch(chords: &[Chord], factors: &[ChordMapEntry], map: &ChordMap) -> f64 {
    if chords.len() < 2 {
        return 0.0;
    }
    let total: u32 = (1..chords.len())
        .map(|b| edit_cost(&WeightedPcs::from_mask(chords[b].pc_mask()), map.mask(factors[b - 1])))
        .sum();
    total as f64 / (chords.len() - 1) as f64
}

fn report_range(score: &Score, factors: &[ChordMapEntry], map: &ChordMap, beats: std::ops::Range<usize>) -> MetricReport {
    let chords = &score.chords[beats.clone()];
    let melody = &score.melody[beats.start * STEPS_PER_BEAT..beats.end * STEPS_PER_BEAT];
    MetricReport {
        cpi: cpi(chords),
        cioi: cioi(chords),
        ctnctr: ctnctr(melody, chords),
        pcs: pcs(melody, chords),
        mctd: mctd(melody, chords),
        che: che(chords),
        cs: cs(chords, score.tonality),
        hs: hs(chords, score.tonality),
        wmch: wmch(chords, &factors[beats], map),
    }
}

/// All nine metrics over a whole score.
pub fn evaluate(score: &Score, map: &ChordMap) -> MetricReport {
    let factors = beat_factors(score, map);
    report_range(score, &factors, map, 0..score.beats())
}

/// Metrics over consecutive windows of `window_bars` bars; the last window
/// may be shorter. Weighted factors are computed once over the whole piece.
pub fn metric_timeseries(score: &Score, map: &ChordMap, window_bars: usize) -> Vec<MetricReport> {
    assert!(window_bars > 0, "window must span at least one bar");
    let factors = beat_factors(score, map);
    let window = window_bars * score.time_signature.beats_per_bar();
    (0..score.beats())
        .step_by(window)
        .map(|start| report_range(score, &factors, map, start..(start + window).min(score.beats())))
        .collect()
}
