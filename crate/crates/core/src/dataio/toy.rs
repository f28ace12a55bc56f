use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RawPiece;
use crate::score::{ChordEvent, Mode, NoteEvent, Tonality};

const MAJOR_SCALE: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR_SCALE: [i32; 7] = [0, 2, 3, 5, 7, 8, 10];

/// Scale-degree progressions (0 = I), one chord per harmonic slot.
const MAJOR_PROGRESSIONS: [[usize; 4]; 5] = [[0, 3, 4, 0], [0, 5, 3, 4], [0, 1, 4, 0], [0, 4, 5, 3], [0, 3, 0, 4]];
const MINOR_PROGRESSIONS: [[usize; 4]; 4] = [[0, 3, 4, 0], [0, 5, 2, 6], [0, 3, 6, 2], [0, 5, 3, 4]];

/// Rhythm cells for one beat, in sixteenths.
const CELLS: [&[usize]; 6] = [&[4], &[2, 2], &[3, 1], &[1, 1, 2], &[2, 1, 1], &[1, 1, 1, 1]];

fn scale(mode: Mode) -> &'static [i32; 7] {
    match mode {
        Mode::Major => &MAJOR_SCALE,
        Mode::Minor => &MINOR_SCALE,
    }
}

/// Pitch classes (relative to the tonic, may exceed 12) of the triad on
/// `degree`; a minor key's V takes the leading tone.
fn triad(mode: Mode, degree: usize, seventh: bool) -> Vec<i32> {
    let s = scale(mode);
    let at = |k: usize| s[k % 7] + 12 * (k / 7) as i32;
    let mut out = vec![at(degree), at(degree + 2), at(degree + 4)];
    if mode == Mode::Minor && degree == 4 {
        out[1] += 1;
    }
    if seventh {
        out.push(at(degree + 6));
    }
    out
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn piece(&mut self, id: String) -> RawPiece {
        let rng = &mut self.rng;
        let meter = *[(4, "4/4"), (4, "4/4"), (4, "4/4"), (2, "2/4"), (2, "2/4")].choose(rng).unwrap();
        let beats_per_bar = meter.0;
        let mode = if rng.gen_bool(0.7) { Mode::Major } else { Mode::Minor };
        let tonic: u8 = rng.gen_range(0..12);
        let bpm = *[72.0, 80.0, 96.0, 100.0, 120.0].choose(rng).unwrap();
        let bars = *[8usize, 12, 16].choose(rng).unwrap();
        let progression: Vec<usize> = match mode {
            Mode::Major => MAJOR_PROGRESSIONS.choose(rng).unwrap().to_vec(),
            Mode::Minor => MINOR_PROGRESSIONS.choose(rng).unwrap().to_vec(),
        };
        // Chord slots: one per bar in 2/4, one or two per bar in 4/4.
        let slot_beats = if beats_per_bar == 4 && rng.gen_bool(0.3) { 2 } else { beats_per_bar };
        let total_beats = bars * beats_per_bar;
        let slots = total_beats / slot_beats;
        let mut degrees: Vec<usize> = (0..slots).map(|i| progression[i % progression.len()]).collect();
        degrees[slots - 2] = 4;
        degrees[slots - 1] = 0;

        // Register offsets exercise octave placement downstream.
        let melody_base = 60 + tonic as i32 + 12 * rng.gen_range(-1..=1);
        let chord_base = 48 + tonic as i32 + 12 * rng.gen_range(-1..=0);

        let mut chords = Vec::with_capacity(slots);
        let mut tones_per_beat = Vec::with_capacity(total_beats);
        for (i, &d) in degrees.iter().enumerate() {
            let seventh = d == 4 && rng.gen_bool(0.25);
            let tones = triad(mode, d, seventh);
            let mut voiced: Vec<i32> = tones.iter().map(|t| chord_base + t).collect();
            if rng.gen_bool(0.1) {
                let lowest = voiced.remove(0);
                voiced.push(lowest + 12);
            }
            chords.push(ChordEvent {
                pitches: voiced.iter().map(|&p| p as u8).collect(),
                onset: (i * slot_beats) as f64,
                duration: slot_beats as f64,
            });
            for _ in 0..slot_beats {
                tones_per_beat.push(tones.clone());
            }
        }

        let s = scale(mode);
        let mut melody = Vec::new();
        let mut last = melody_base + tones_per_beat[0][0];
        let mut beat = 0;
        while beat < total_beats {
            let tones = &tones_per_beat[beat];
            let nearest_tone = |from: i32| {
                tones
                    .iter()
                    .flat_map(|&t| [-12, 0, 12].map(|o| melody_base + t + o))
                    .min_by_key(|&p| ((p - from).abs(), p))
                    .unwrap()
            };
            let in_bar = beat % beats_per_bar;
            let last_beat = beat + 1 == total_beats;
            if !last_beat && in_bar % 2 == 0 && beat + 1 < total_beats && rng.gen_bool(0.15) {
                last = nearest_tone(last);
                melody.push(NoteEvent { pitch: last as u8, onset: beat as f64, duration: 2.0 });
                beat += 2;
                continue;
            }
            if in_bar != 0 && rng.gen_bool(0.05) {
                beat += 1;
                continue;
            }
            let cell: &[usize] = if last_beat { &[4] } else { CELLS.choose(rng).unwrap() };
            let mut step = 0;
            for (k, &len) in cell.iter().enumerate() {
                let pitch = if k == 0 {
                    nearest_tone((last + rng.gen_range(-4..=4)).clamp(melody_base - 3, melody_base + 14))
                } else {
                    // Neighbouring scale step.
                    let rel = (last - melody_base).rem_euclid(12);
                    let idx = s.iter().position(|&x| x >= rel).unwrap_or(7) as i32;
                    let dir = if rng.gen_bool(0.5) { 1 } else { -1 };
                    let k2 = idx + dir;
                    let oct = (last - melody_base).div_euclid(12);
                    let wrapped = k2.rem_euclid(7);
                    melody_base + s[wrapped as usize] + 12 * (oct + k2.div_euclid(7))
                };
                last = pitch;
                melody.push(NoteEvent {
                    pitch: pitch as u8,
                    onset: beat as f64 + step as f64 / 4.0,
                    duration: len as f64 / 4.0,
                });
                step += len;
            }
            beat += 1;
        }
        RawPiece {
            id,
            bpm,
            time_signature: meter.1.to_string(),
            tonality: Tonality { tonic, mode },
            melody,
            chords,
        }
    }
}

/// Deterministic corpus of short I-IV-V style pieces in random keys and
/// registers. Every fifth piece from index 3 on carries a defect that
/// screening must catch: a 3/4 meter or a half-beat chord.
pub fn toy_corpus(count: usize, seed: u64) -> Vec<RawPiece> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    (0..count)
        .map(|i| {
            let mut p = g.piece(format!("toy-{i:03}"));
            if i % 10 == 3 {
                p.time_signature = "3/4".into();
            } else if i % 10 == 8 {
                let c = &mut p.chords[1];
                c.duration = 0.5;
            }
            p
        })
        .collect()
}

fn tune(id: &str, bpm: f64, tonality: Tonality, notes: &[(u8, f64)], chords: &[(&[u8], f64)]) -> RawPiece {
    let mut t = 0.0;
    let melody = notes
        .iter()
        .map(|&(pitch, duration)| {
            let n = NoteEvent { pitch, onset: t, duration };
            t += duration;
            n
        })
        .collect();
    let mut t = 0.0;
    let chords = chords
        .iter()
        .map(|&(pitches, duration)| {
            let c = ChordEvent { pitches: pitches.to_vec(), onset: t, duration };
            t += duration;
            c
        })
        .collect();
    RawPiece {
        id: id.into(),
        bpm,
        time_signature: "4/4".into(),
        tonality,
        melody,
        chords,
    }
}

/// Three traditional melodies with simple harmonizations.
pub fn folk_tunes() -> Vec<RawPiece> {
    const C: &[u8] = &[48, 52, 55];
    const F: &[u8] = &[53, 57, 60];
    const G: &[u8] = &[43, 47, 50];
    const G7: &[u8] = &[43, 47, 50, 53];
    let q = 1.0;
    let h = 2.0;

    let twinkle_a = [(60, q), (60, q), (67, q), (67, q), (69, q), (69, q), (67, h)];
    let twinkle_b = [(65, q), (65, q), (64, q), (64, q), (62, q), (62, q), (60, h)];
    let twinkle_c = [(67, q), (67, q), (65, q), (65, q), (64, q), (64, q), (62, h)];
    let mut twinkle = Vec::new();
    for line in [&twinkle_a, &twinkle_b, &twinkle_c, &twinkle_c, &twinkle_a, &twinkle_b] {
        twinkle.extend_from_slice(line);
    }
    let ta: [(&[u8], f64); 3] = [(C, 4.0), (F, 2.0), (C, 2.0)];
    let tb: [(&[u8], f64); 4] = [(F, 2.0), (C, 2.0), (G, 2.0), (C, 2.0)];
    let tc: [(&[u8], f64); 4] = [(C, 2.0), (F, 2.0), (C, 2.0), (G, 2.0)];
    let mut twinkle_chords: Vec<(&[u8], f64)> = Vec::new();
    for line in [&ta[..], &tb[..], &tc[..], &tc[..], &ta[..], &tb[..]] {
        twinkle_chords.extend_from_slice(line);
    }

    let ode_a = [(64, q), (64, q), (65, q), (67, q), (67, q), (65, q), (64, q), (62, q)];
    let ode_b = [(60, q), (60, q), (62, q), (64, q)];
    let mut ode = Vec::new();
    ode.extend_from_slice(&ode_a);
    ode.extend_from_slice(&ode_b);
    ode.extend_from_slice(&[(64, 1.5), (62, 0.5), (62, h)]);
    ode.extend_from_slice(&ode_a);
    ode.extend_from_slice(&ode_b);
    ode.extend_from_slice(&[(62, 1.5), (60, 0.5), (60, h)]);
    let ode_chords: Vec<(&[u8], f64)> =
        vec![(C, 4.0), (G, 4.0), (C, 4.0), (G, 4.0), (C, 4.0), (G, 4.0), (C, 4.0), (G7, 2.0), (C, 2.0)];

    // In G major.
    const GG: &[u8] = &[43, 47, 50];
    const DD: &[u8] = &[50, 54, 57];
    let e = 0.5;
    let mut jacques = Vec::new();
    for _ in 0..2 {
        jacques.extend_from_slice(&[(67, q), (69, q), (71, q), (67, q)]);
    }
    for _ in 0..2 {
        jacques.extend_from_slice(&[(71, q), (72, q), (74, h)]);
    }
    for _ in 0..2 {
        jacques.extend_from_slice(&[(74, e), (76, e), (74, e), (72, e), (71, q), (67, q)]);
    }
    for _ in 0..2 {
        jacques.extend_from_slice(&[(67, q), (62, q), (67, h)]);
    }
    let mut jacques_chords: Vec<(&[u8], f64)> = vec![(GG, 24.0)];
    for _ in 0..2 {
        jacques_chords.extend_from_slice(&[(GG, 1.0), (DD, 1.0), (GG, 2.0)]);
    }

    vec![
        tune("folk-twinkle", 96.0, Tonality::C_MAJOR, &twinkle, &twinkle_chords),
        tune("folk-ode", 100.0, Tonality::C_MAJOR, &ode, &ode_chords),
        tune("folk-jacques", 80.0, Tonality { tonic: 7, mode: Mode::Major }, &jacques, &jacques_chords),
    ]
}
