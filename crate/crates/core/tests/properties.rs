mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lookahead::features::{harmonic_steps, structural_chord_flag, terminal_chord_flags, FeatureConfig, FeatureTracker};
use lookahead::metrics;
use lookahead::predictor::Crf;
use lookahead::score::{classify_degree, edit_cost, nearest_chordmap_chord, WeightedPcs, STEPS_PER_BEAT};
use lookahead::texture::{render, PatternId, PatternLibrary};
use lookahead::{Chord, ChordMap, Score, TimeSignature};

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rotate(w: &[u32; 12], k: usize) -> [u32; 12] {
    let mut out = [0; 12];
    for pc in 0..12 {
        out[(pc + k) % 12] = w[pc];
    }
    out
}

fn rotate_mask(m: u16, k: u32) -> u16 {
    ((m << k) | (m >> (12 - k))) & 0xfff
}

fn octave_up(s: &Score) -> Option<Score> {
    let melody = s.melody.iter().map(|p| if p.is_rest() { Some(*p) } else { p.transpose(12) }).collect::<Option<Vec<_>>>()?;
    let chords = s.chords.iter().map(|c| c.transpose(12).ok()).collect::<Option<Vec<_>>>()?;
    Score::new(s.id.clone(), s.bpm, s.time_signature, s.tonality, melody, chords).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nearest_entry_is_the_first_minimum_of_a_full_scan(w in prop::array::uniform12(0u32..4)) {
        let map = ChordMap::standard();
        let (entry, cost) = nearest_chordmap_chord(&WeightedPcs(w), map);
        prop_assert_eq!((entry, cost), nearest(map, &weights_of(&w)));
    }

    #[test]
    fn edit_cost_is_transposition_invariant(w in prop::array::uniform12(0u32..5), target in 1u16..4096, k in 1u32..12) {
        let a = edit_cost(&WeightedPcs(w), target);
        let b = edit_cost(&WeightedPcs(rotate(&w, k as usize)), rotate_mask(target, k));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn degrees_move_with_the_key(seed in any::<u64>(), k in 0i32..12) {
        let map = ChordMap::standard();
        let mut r = rng(seed);
        let t = random_tonality(&mut r);
        let pitches = random_chord(&mut r, map);
        let chord = Chord::new(pitches.clone()).unwrap();
        let moved = chord.transpose(k - 6).unwrap();
        prop_assert_eq!(classify_degree(&chord, t), classify_degree(&moved, t.transpose(k - 6)));
        prop_assert_eq!(classify_degree(&chord, t).map(|d| (d.degree.index() + 1, d.inverted)), degree(map, &pitches, t));
    }

    #[test]
    fn structural_chords_are_in_root_position(seed in any::<u64>()) {
        let map = ChordMap::standard();
        let mut r = rng(seed);
        let t = random_tonality(&mut r);
        let chord = Chord::new(random_chord(&mut r, map)).unwrap();
        if structural_chord_flag(&chord, t) {
            prop_assert!(!chord.is_inverted());
        }
    }

    #[test]
    fn terminal_flags_ignore_the_key(seed in any::<u64>(), k in -5i32..6) {
        let map = ChordMap::standard();
        let mut r = rng(seed);
        let t = random_tonality(&mut r);
        let chords: Vec<Chord> = random_progression(&mut r, map, t, 12).into_iter().map(|c| Chord::new(c).unwrap()).collect();
        let moved: Vec<Chord> = chords.iter().map(|c| c.transpose(k).unwrap()).collect();
        let flags = terminal_chord_flags(&harmonic_steps(&chords, t));
        prop_assert!(!flags[0]);
        prop_assert_eq!(flags, terminal_chord_flags(&harmonic_steps(&moved, t.transpose(k))));
    }

    #[test]
    fn splices_respect_the_cap_and_the_cost_bound(seed in any::<u64>(), cap in 1usize..20) {
        let map = ChordMap::standard();
        let mut r = rng(seed);
        let t = random_tonality(&mut r);
        let melody = random_melody(&mut r, 32, t);
        let config = FeatureConfig { max_splice_beats: cap };
        let mut tracker = FeatureTracker::new(TimeSignature::FOUR_FOUR, t, map, config);
        for (b, samples) in melody.chunks(STEPS_PER_BEAT).enumerate() {
            let f = tracker.push_beat(samples);
            prop_assert!(f.splice.beats >= 1 && f.splice.beats <= cap.min(b + 1));
            prop_assert!(f.splice.cost_bound_holds());
        }
    }

    #[test]
    fn metrics_stay_in_their_ranges(seed in any::<u64>(), bars in 1usize..6) {
        let map = ChordMap::standard();
        let s = random_score(&mut rng(seed), map, "p", bars);
        let m = metrics::evaluate(&s, map);
        for v in [m.ctnctr, m.hs] {
            prop_assert!((0.0..=1.0).contains(&v), "{:?}", m);
        }
        prop_assert!((-1.0..=1.0).contains(&m.pcs));
        prop_assert!([m.cpi, m.cioi, m.mctd, m.che, m.cs, m.wmch].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn metrics_ignore_an_octave_shift(seed in any::<u64>(), bars in 1usize..6) {
        let map = ChordMap::standard();
        let s = random_score(&mut rng(seed), map, "p", bars);
        if let Some(up) = octave_up(&s) {
            let (a, b) = (metrics::evaluate(&s, map).values(), metrics::evaluate(&up, map).values());
            for k in 0..9 {
                prop_assert!(close(a[k], b[k], 1e-12), "metric {}: {} vs {}", k, a[k], b[k]);
            }
        }
    }

    #[test]
    fn rendered_notes_are_chord_tones(seed in any::<u64>(), pattern in 0usize..8) {
        let map = ChordMap::standard();
        let chord = Chord::new(random_chord(&mut rng(seed), map)).unwrap();
        let id = PatternId::ALL[pattern];
        for e in render(PatternLibrary::standard().get(id), &chord, 0, TimeSignature::FOUR_FOUR) {
            prop_assert!(chord.contains_class(e.pitch % 12));
        }
    }

    #[test]
    fn crf_marginals_are_distributions(seed in any::<u64>(), labels in 1usize..6, n in 1usize..8) {
        use rand::Rng;
        let mut r = rng(seed);
        let features = 6;
        let weights = (0..Crf::weight_count(labels, features, true)).map(|_| r.gen_range(-3.0..3.0)).collect();
        let crf = Crf::from_weights(labels, features, true, weights).unwrap();
        let feats: Vec<Vec<u32>> = (0..n).map(|_| (0..features as u32).filter(|_| r.gen_bool(0.5)).collect()).collect();
        for row in crf.marginals(&feats).iter().chain(std::iter::once(&crf.frontier_marginal(&feats))) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
    }
}
