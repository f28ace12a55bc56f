//! Reference implementations written straight from the definitions, with no
//! shortcuts, plus random input generators. Shared by the acceptance and
//! property test targets.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use lookahead::score::{ChordMapEntry, Mode, STEPS_PER_BEAT};
use lookahead::{Chord, ChordMap, Pitch, Score, TimeSignature, Tonality};

// ---------------------------------------------------------------- chords

pub fn pc_set(pitches: &[u8]) -> Vec<u8> {
    let mut pcs: Vec<u8> = pitches.iter().map(|p| p % 12).collect();
    pcs.sort_unstable();
    pcs.dedup();
    pcs
}

pub fn entry_classes(map: &ChordMap, e: ChordMapEntry) -> Vec<u8> {
    let offsets = &map.qualities()[e.quality as usize].offsets;
    pc_set(&offsets.iter().map(|o| o + e.root).collect::<Vec<_>>())
}

fn circ(a: u8, b: u8) -> u32 {
    let d = (a as i32 - b as i32).unsigned_abs() % 12;
    d.min(12 - d)
}

/// Edit cost by exhaustive search over every partial matching of candidate
/// classes onto target classes. Unmatched candidates are deleted (cost =
/// weight), matched ones replaced (weight x circular distance), unmatched
/// targets inserted (cost 1).
pub fn edit_cost(candidate: &[(u8, u32)], target: &[u8]) -> u32 {
    fn go(c: &[(u8, u32)], target: &[u8], used: u32, memo: &mut [u32]) -> u32 {
        if c.is_empty() {
            return target.len() as u32 - used.count_ones();
        }
        let key = (c.len() << target.len()) | used as usize;
        if memo[key] != u32::MAX {
            return memo[key];
        }
        let (pc, w) = c[0];
        let mut best = w + go(&c[1..], target, used, memo);
        for (j, &t) in target.iter().enumerate() {
            if used & (1 << j) == 0 {
                best = best.min(w * circ(pc, t) + go(&c[1..], target, used | 1 << j, memo));
            }
        }
        memo[key] = best;
        best
    }
    go(candidate, target, 0, &mut vec![u32::MAX; (candidate.len() + 1) << target.len()])
}

pub fn weights_of(w: &[u32; 12]) -> Vec<(u8, u32)> {
    (0..12u8).filter(|&pc| w[pc as usize] > 0).map(|pc| (pc, w[pc as usize])).collect()
}

/// Scan of all 432 entries in (quality, root) order keeping the first minimum.
pub fn nearest(map: &ChordMap, candidate: &[(u8, u32)]) -> (ChordMapEntry, u32) {
    let mut best: Option<(ChordMapEntry, u32)> = None;
    for quality in 0..36u8 {
        for root in 0..12u8 {
            let e = ChordMapEntry { quality, root };
            let c = edit_cost(candidate, &entry_classes(map, e));
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((e, c));
            }
        }
    }
    best.unwrap()
}

/// Memoized [`nearest`]; the scan is slow enough that random streams need it.
#[derive(Default)]
pub struct NearestOracle(HashMap<[u32; 12], (ChordMapEntry, u32)>);

impl NearestOracle {
    pub fn get(&mut self, map: &ChordMap, w: &[u32; 12]) -> (ChordMapEntry, u32) {
        *self.0.entry(*w).or_insert_with(|| nearest(map, &weights_of(w)))
    }
}

const MAJOR: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];

pub fn scale(t: Tonality) -> [u8; 7] {
    let steps = if t.mode == Mode::Major { MAJOR } else { MINOR };
    steps.map(|s| (t.tonic + s) % 12)
}

/// Root of a chord: a ChordMap reading whose root is the bass if one exists,
/// else the first reading in table order. `None` outside the map.
pub fn chord_root(map: &ChordMap, pitches: &[u8]) -> Option<u8> {
    let set = pc_set(pitches);
    let bass = pitches.iter().min().unwrap() % 12;
    let readings: Vec<ChordMapEntry> = (0..36u8)
        .flat_map(|quality| (0..12u8).map(move |root| ChordMapEntry { quality, root }))
        .filter(|&e| entry_classes(map, e) == set)
        .collect();
    readings.iter().find(|e| e.root == bass).or(readings.first()).map(|e| e.root)
}

/// 1-based scale degree and inversion.
pub fn degree(map: &ChordMap, pitches: &[u8], t: Tonality) -> Option<(usize, bool)> {
    let root = chord_root(map, pitches)?;
    let idx = scale(t).iter().position(|&pc| pc == root)?;
    let bass = pitches.iter().min().unwrap() % 12;
    Some((idx + 1, bass != root))
}

pub fn structural(map: &ChordMap, pitches: &[u8], t: Tonality) -> bool {
    matches!(degree(map, pitches, t), Some((1 | 2 | 4 | 5, false)))
}

fn has_seventh(map: &ChordMap, pitches: &[u8]) -> bool {
    let Some(root) = chord_root(map, pitches) else { return false };
    pc_set(pitches).iter().any(|&pc| pc == (root + 10) % 12 || pc == (root + 11) % 12)
}

/// Cadence flags: V-I, IV-I, V7-VI, and any move onto V or VII that is not a
/// repetition of that degree. Position 0 is never flagged.
pub fn terminal_flags(map: &ChordMap, chords: &[Vec<u8>], t: Tonality) -> Vec<bool> {
    let deg: Vec<Option<usize>> = chords.iter().map(|c| degree(map, c, t).map(|d| d.0)).collect();
    (0..chords.len())
        .map(|i| {
            if i == 0 {
                return false;
            }
            let (prev, cur) = (deg[i - 1], deg[i]);
            match cur {
                None => false,
                Some(1) => prev == Some(5) || prev == Some(4),
                Some(6) => prev == Some(5) && has_seventh(map, &chords[i - 1]),
                Some(d @ (5 | 7)) => prev != Some(d),
                _ => false,
            }
        })
        .collect()
}

// ---------------------------------------------------------------- melody features

pub fn strength_is_accent(beat_in_bar: usize, ts: TimeSignature) -> bool {
    match ts.beats_per_bar() {
        4 => beat_in_bar == 0 || beat_in_bar == 2,
        _ => beat_in_bar == 0,
    }
}

/// Weighted-note flag of every sixteenth, evaluated causally: a note is
/// judged when its onset beat completes, over the one-bar window ending
/// there, with every duration cut at that moment.
pub fn weighted_note_track(melody: &[Pitch], ts: TimeSignature) -> Vec<bool> {
    let n = melody.len();
    let onset_of = |s: usize| {
        let mut o = s;
        while o > 0 && melody[o - 1] == melody[s] {
            o -= 1;
        }
        o
    };
    let mut out = vec![false; n];
    for s in 0..n {
        if melody[s].is_rest() {
            continue;
        }
        let onset = onset_of(s);
        let beat = onset / STEPS_PER_BEAT;
        let now = (beat + 1) * STEPS_PER_BEAT;
        let from = beat.saturating_sub(3) * STEPS_PER_BEAT;
        // Notes sounding inside [from, now): (onset, cut duration).
        let mut notes: Vec<(usize, usize)> = Vec::new();
        let mut i = from;
        while i < now {
            if melody[i].is_rest() {
                i += 1;
                continue;
            }
            let o = onset_of(i);
            let mut e = i;
            while e < now && melody[e] == melody[i] {
                e += 1;
            }
            notes.push((o, e - o));
            i = e;
        }
        let dur = |o: usize| notes.iter().find(|n| n.0 == o).unwrap().1;
        let longest = notes.iter().map(|n| n.1).max().unwrap();
        let latest_longest = notes.iter().filter(|n| n.1 == longest).map(|n| n.0).max().unwrap();
        let bpb = ts.beats_per_bar();
        let t = strength_is_accent(beat % bpb, ts);
        let weak = !t;
        let c = weak && dur(onset) * 2 >= 3 * STEPS_PER_BEAT;
        let l = onset == latest_longest;
        out[s] = (t && !c) || (!t && c && l);
    }
    out
}

/// First-stage statistics of each beat: every note sounding in the beat adds
/// its pitch class once, weight 2 if flagged.
pub fn beat_stats(melody: &[Pitch], flags: &[bool]) -> Vec<[u32; 12]> {
    melody
        .chunks(STEPS_PER_BEAT)
        .enumerate()
        .map(|(b, beat)| {
            let mut w = [0u32; 12];
            for (i, p) in beat.iter().enumerate() {
                let s = b * STEPS_PER_BEAT + i;
                let new_note = i == 0 || beat[i - 1] != *p;
                if let (Some(m), true) = (p.midi(), new_note) {
                    w[(m % 12) as usize] += if flags[s] { 2 } else { 1 };
                }
            }
            w
        })
        .collect()
}

pub fn merge(a: &[u32; 12], b: &[u32; 12]) -> [u32; 12] {
    std::array::from_fn(|i| a[i] + b[i])
}

/// Greedy backward splice: absorb the previous beat while
/// w(merged) <= w(segment) + w(beat) + 1, at most `cap` beats.
pub fn splice(oracle: &mut NearestOracle, map: &ChordMap, stats: &[[u32; 12]], cap: usize) -> (usize, [u32; 12]) {
    let cur = stats.len() - 1;
    let mut seg = stats[cur];
    let mut beats = 1;
    while beats < cap && beats <= cur {
        let prev = stats[cur - beats];
        let w_old = oracle.get(map, &seg).1 + oracle.get(map, &prev).1 + 1;
        let merged = merge(&seg, &prev);
        if oracle.get(map, &merged).1 > w_old {
            break;
        }
        seg = merged;
        beats += 1;
    }
    (beats, seg)
}

// ---------------------------------------------------------------- metrics

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn events(chords: &[Vec<u8>]) -> Vec<(Vec<u8>, usize)> {
    let mut out: Vec<(Vec<u8>, usize)> = Vec::new();
    for (b, c) in chords.iter().enumerate() {
        if out.last().is_none_or(|(last, _)| last != c) {
            out.push((c.clone(), b));
        }
    }
    out
}

pub fn cpi(chords: &[Vec<u8>]) -> f64 {
    let ev = events(chords);
    let means: Vec<f64> = ev.iter().map(|(c, _)| c.iter().map(|&p| p as f64).sum::<f64>() / c.len() as f64).collect();
    mean(&means.windows(2).map(|w| (w[1] - w[0]).abs()).collect::<Vec<_>>())
}

pub fn cioi(chords: &[Vec<u8>]) -> f64 {
    let ev = events(chords);
    mean(&ev.windows(2).map(|w| (w[1].1 - w[0].1) as f64).collect::<Vec<_>>())
}

pub fn ctnctr(melody: &[Option<u8>], chords: &[Vec<u8>]) -> f64 {
    let mut total = 0;
    let mut hits = 0;
    for (s, p) in melody.iter().enumerate() {
        if let Some(p) = p {
            total += 1;
            if chords[s / 4].iter().any(|c| c % 12 == p % 12) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

pub fn pcs(melody: &[Option<u8>], chords: &[Vec<u8>]) -> f64 {
    let mut scores = Vec::new();
    for (s, p) in melody.iter().enumerate() {
        let Some(p) = p else { continue };
        for &c in &chords[s / 4] {
            let interval = (*p as i32 - c as i32).abs() % 12;
            scores.push(match interval {
                0 | 3 | 4 | 7 | 8 | 9 => 1.0,
                5 => 0.0,
                _ => -1.0,
            });
        }
    }
    mean(&scores)
}

/// Tonal centroid through the explicit 6 x 12 transform matrix.
pub fn centroid(profile: &[f64; 12]) -> [f64; 6] {
    use std::f64::consts::PI;
    let (r1, r2, r3) = (1.0, 1.0, 0.5);
    let mut phi = [[0.0; 12]; 6];
    for l in 0..12 {
        let l_f = l as f64;
        phi[0][l] = r1 * (l_f * 7.0 * PI / 6.0).sin();
        phi[1][l] = r1 * (l_f * 7.0 * PI / 6.0).cos();
        phi[2][l] = r2 * (l_f * 3.0 * PI / 2.0).sin();
        phi[3][l] = r2 * (l_f * 3.0 * PI / 2.0).cos();
        phi[4][l] = r3 * (l_f * 2.0 * PI / 3.0).sin();
        phi[5][l] = r3 * (l_f * 2.0 * PI / 3.0).cos();
    }
    let norm: f64 = profile.iter().map(|v| v.abs()).sum();
    let mut out = [0.0; 6];
    if norm == 0.0 {
        return out;
    }
    for d in 0..6 {
        for l in 0..12 {
            out[d] += phi[d][l] * profile[l] / norm;
        }
    }
    out
}

pub fn mctd(melody: &[Option<u8>], chords: &[Vec<u8>]) -> f64 {
    let mut d = Vec::new();
    for (s, p) in melody.iter().enumerate() {
        let Some(p) = p else { continue };
        let mut mp = [0.0; 12];
        mp[(p % 12) as usize] = 1.0;
        let mut cp = [0.0; 12];
        for pc in pc_set(&chords[s / 4]) {
            cp[pc as usize] = 1.0;
        }
        let (a, b) = (centroid(&mp), centroid(&cp));
        d.push((0..6).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt());
    }
    mean(&d)
}

pub fn che(chords: &[Vec<u8>]) -> f64 {
    let mut hist: Vec<(Vec<u8>, usize)> = Vec::new();
    for c in chords {
        let label = pc_set(c);
        match hist.iter_mut().find(|(l, _)| *l == label) {
            Some((_, n)) => *n += 1,
            None => hist.push((label, 1)),
        }
    }
    let n = chords.len() as f64;
    -hist.iter().map(|&(_, k)| (k as f64 / n) * (k as f64 / n).ln()).sum::<f64>()
}

fn triad(t: Tonality, degree: usize) -> Vec<u8> {
    let s = scale(t);
    pc_set(&[s[degree], s[(degree + 2) % 7], s[(degree + 4) % 7]])
}

fn unit_weights(pitches: &[u8]) -> Vec<(u8, u32)> {
    pc_set(pitches).into_iter().map(|pc| (pc, 1)).collect()
}

pub fn cs(chords: &[Vec<u8>], t: Tonality) -> f64 {
    let targets: Vec<Vec<u8>> = [0, 1, 3, 4].iter().map(|&d| triad(t, d)).collect();
    mean(&chords.iter().map(|c| targets.iter().map(|x| edit_cost(&unit_weights(c), x)).min().unwrap() as f64).collect::<Vec<_>>())
}

pub fn hs(map: &ChordMap, chords: &[Vec<u8>], t: Tonality) -> f64 {
    let flags = terminal_flags(map, chords, t);
    mean(&flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect::<Vec<_>>())
}

pub fn wmch(map: &ChordMap, chords: &[Vec<u8>], factors: &[ChordMapEntry]) -> f64 {
    mean(
        &(1..chords.len())
            .map(|b| edit_cost(&unit_weights(&chords[b]), &entry_classes(map, factors[b - 1])) as f64)
            .collect::<Vec<_>>(),
    )
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-12
}

// ---------------------------------------------------------------- generators

/// A melody of `beats` beats: notes of random length drawn from a scale
/// plus occasional chromatic tones and rests.
pub fn random_melody(rng: &mut ChaCha8Rng, beats: usize, t: Tonality) -> Vec<Pitch> {
    let sc = scale(t);
    let mut out = Vec::with_capacity(beats * STEPS_PER_BEAT);
    while out.len() < beats * STEPS_PER_BEAT {
        let len = [1, 1, 2, 2, 2, 3, 4, 4, 4, 6, 8, 12][rng.gen_range(0..12)];
        let p = if rng.gen_bool(0.12) {
            Pitch::REST
        } else {
            let pc = if rng.gen_bool(0.1) { rng.gen_range(0..12) } else { sc[rng.gen_range(0..7)] };
            Pitch::from_option(Some(60 + pc + 12 * rng.gen_range(0..2) as u8 - 12 * (pc > 7) as u8)).unwrap()
        };
        // Adjacent equal pitches would merge; that is allowed.
        for _ in 0..len {
            out.push(p);
        }
    }
    out.truncate(beats * STEPS_PER_BEAT);
    out
}

/// Root-position or inverted ChordMap chords, mixed with arbitrary pitch sets.
pub fn random_chord(rng: &mut ChaCha8Rng, map: &ChordMap) -> Vec<u8> {
    if rng.gen_bool(0.15) {
        let n = rng.gen_range(1..5);
        let mut v: Vec<u8> = (0..n).map(|_| rng.gen_range(40..72)).collect();
        v.sort_unstable();
        v.dedup();
        return v;
    }
    let e = ChordMapEntry { quality: rng.gen_range(0..36), root: rng.gen_range(0..12) };
    let mut v = map.voicing(e, 36);
    if rng.gen_bool(0.25) {
        let k = rng.gen_range(1..v.len());
        for p in v.iter_mut().take(k) {
            *p += 12;
        }
        v.sort_unstable();
    }
    v
}

/// Diatonic triads and sevenths of the key, some inverted, plus outliers, so
/// cadence patterns are common.
pub fn random_progression(rng: &mut ChaCha8Rng, map: &ChordMap, t: Tonality, beats: usize) -> Vec<Vec<u8>> {
    let s = scale(t);
    (0..beats)
        .map(|_| {
            if rng.gen_bool(0.2) {
                return random_chord(rng, map);
            }
            let d = rng.gen_range(0..7);
            let mut v = vec![36 + s[d], 36 + s[(d + 2) % 7] + 12 * (s[(d + 2) % 7] < s[d]) as u8];
            let fifth = s[(d + 4) % 7];
            v.push(36 + fifth + 12 * (fifth < s[d]) as u8);
            if rng.gen_bool(0.3) {
                let seventh = s[(d + 6) % 7];
                v.push(36 + seventh + 12 * (seventh < s[d]) as u8);
            }
            if rng.gen_bool(0.2) {
                v[0] += 12;
            }
            v.sort_unstable();
            v
        })
        .collect()
}

pub fn random_tonality(rng: &mut ChaCha8Rng) -> Tonality {
    let mode = if rng.gen_bool(0.5) { Mode::Major } else { Mode::Minor };
    Tonality::new(rng.gen_range(0..12), mode).unwrap()
}

pub fn random_score(rng: &mut ChaCha8Rng, map: &ChordMap, id: &str, bars: usize) -> Score {
    let t = random_tonality(rng);
    let ts = if rng.gen_bool(0.8) { TimeSignature::FOUR_FOUR } else { TimeSignature::TWO_FOUR };
    let beats = bars * ts.beats_per_bar();
    let melody = random_melody(rng, beats, t);
    let mut chords = random_progression(rng, map, t, beats);
    // Hold some chords for several beats so CPI/CIOI merge events.
    for b in 1..beats {
        if rng.gen_bool(0.3) {
            chords[b] = chords[b - 1].clone();
        }
    }
    let chords = chords.into_iter().map(|c| Chord::new(c).unwrap()).collect();
    Score::new(id, 100.0, ts, t, melody, chords).unwrap()
}

pub fn melody_options(melody: &[Pitch]) -> Vec<Option<u8>> {
    melody.iter().map(|p| p.midi()).collect()
}

pub fn chord_lists(chords: &[Chord]) -> Vec<Vec<u8>> {
    chords.iter().map(|c| c.pitches().to_vec()).collect()
}
