//! Acceptance criteria A1-A9. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; the process fails if any criterion does.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use lookahead::arranger::{
    streaming_accuracy, teacher_forced_accuracy, train_arranger, training_examples, ArrangerConfig,
    ArrangerModel, FeatureMask,
};
use lookahead::dataio::{
    export_midi, folk_tunes, import_midi, melody_mean, prepare, prepare_dir, score_song, toy_corpus, write_raw_dir,
    RawPiece, RejectReason, Registers, CLEAN_FILE,
};
use lookahead::features::{harmonic_steps, structural_chord_flag, terminal_chord_flags, FeatureConfig, FeatureTracker};
use lookahead::metrics::{self, beat_factors, metric_timeseries};
use lookahead::pipeline::{run_stream, ClockMode, Engines, SessionConfig, StreamEvent};
use lookahead::predictor::{Crf, CrfModel, PredictionWindow, Predictor, TemplateSet, TrainConfig};
use lookahead::score::{Mode, STEPS_PER_BEAT};
use lookahead::texture::{render, Instrument, PatternId, PatternLibrary, PatternNote, TexturePattern};
use lookahead::{Chord, ChordMap, Pitch, Result as CoreResult, Score, TimeSignature, Tonality};

use common::*;

type Verdict = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The 20 clean pieces every model-based criterion trains on.
fn training_corpus() -> Vec<Score> {
    lookahead::dataio::prepare_corpus(&toy_corpus(25, 2024), Registers::default()).scores
}

/// Trained engines shared by A1-A3.
struct Trained {
    scores: Vec<Score>,
    crf: Option<Arc<CrfModel>>,
    arranger: Option<Arc<ArrangerModel>>,
}

// ---------------------------------------------------------------- A1-A3

/// 64 bars of 4/4 melody made by chaining the training pieces.
fn long_melody(scores: &[Score]) -> Vec<Pitch> {
    scores
        .iter()
        .filter(|s| s.time_signature == TimeSignature::FOUR_FOUR)
        .flat_map(|s| s.melody.iter().copied())
        .cycle()
        .take(64 * 16)
        .collect()
}

fn engines(t: &Trained) -> std::result::Result<Engines, String> {
    let crf = t.crf.clone().ok_or("no trained CRF (A4 failed to train)")?;
    let mut e = Engines::untrained(Tonality::C_MAJOR);
    e.predictor = crf;
    if let Some(a) = &t.arranger {
        e.arranger = a.clone();
    }
    Ok(e)
}

fn sim_config() -> SessionConfig {
    SessionConfig { bpm: 80.0, clock: ClockMode::Simulated, ..SessionConfig::default() }
}

fn a1(t: &Trained) -> Verdict {
    let melody = long_melody(&t.scores);
    let started = Instant::now();
    let (events, session) = run_stream(sim_config(), engines(t)?, &melody);
    let runtime = started.elapsed();
    let clock = session.clock();
    let outs: Vec<_> = events
        .iter()
        .filter_map(|e| match e {
            StreamEvent::AccompOut(o) => Some(o),
            _ => None,
        })
        .collect();
    let on_time = outs.iter().filter(|o| o.emit_ts_us <= clock.beat_onset_us(o.beat)).count();
    let covered = (0..256).all(|b| outs.iter().any(|o| o.beat == b));
    let errors = events.iter().filter(|e| e.kind() == "error").count();
    let arranger = if t.arranger.is_some() { "trained arranger" } else { "rule arranger" };
    check(
        on_time == outs.len() && covered && errors == 0 && runtime < Duration::from_secs(60),
        format!(
            "{on_time}/{} accomp_out at or before onset, beats 0..256 covered: {covered}, errors {errors}; \
             64 bars at 80 BPM in {:.2} s (limit 60 s, {arranger})",
            outs.len(),
            runtime.as_secs_f64()
        ),
    )
}

fn a2(t: &Trained) -> Verdict {
    let labels = t.crf.as_ref().ok_or("no trained CRF")?.labels().len();
    let (_, session) = run_stream(sim_config(), engines(t)?, &long_melody(&t.scores));
    let r = session.report();
    check(
        labels <= 64 && r.physical.p99_us < 50_000 && r.mean_margin_beats > 0.5,
        format!(
            "p99 per-beat compute {:.3} ms (limit 50 ms, {labels} labels), max {:.3} ms; mean emit-ahead margin {:.3} beats (limit 0.5)",
            r.physical.p99_us as f64 / 1e3,
            r.physical.max_us as f64 / 1e3,
            r.mean_margin_beats
        ),
    )
}

/// Records every window it is asked about; answers with the wrapped model or
/// with seeded random chords.
struct Recording {
    inner: Arc<CrfModel>,
    noise: Option<Mutex<ChaCha8Rng>>,
    windows: Mutex<Vec<PredictionWindow>>,
}

impl Predictor for Recording {
    fn predict(&self, w: &PredictionWindow) -> CoreResult<Chord> {
        self.windows.lock().unwrap().push(w.clone());
        match &self.noise {
            Some(rng) => {
                let labels = self.inner.labels();
                Ok(labels[rng.lock().unwrap().gen_range(0..labels.len())].clone())
            }
            None => Ok(self.inner.predict_next(w).clone()),
        }
    }
}

fn lines_of(events: &[StreamEvent], kind: &str) -> Vec<String> {
    events.iter().filter(|e| e.kind() == kind).map(StreamEvent::to_json_line).collect()
}

fn a3(t: &Trained) -> Verdict {
    let crf = t.crf.clone().ok_or("no trained CRF")?;
    let melody = long_melody(&t.scores);
    let run = |noise: bool, render: bool| {
        let rec = Arc::new(Recording {
            inner: crf.clone(),
            noise: noise.then(|| Mutex::new(ChaCha8Rng::seed_from_u64(99))),
            windows: Mutex::new(Vec::new()),
        });
        let mut e = engines(t).unwrap();
        e.predictor = rec.clone();
        let (events, _) = run_stream(SessionConfig { render, ..sim_config() }, e, &melody);
        let windows = std::mem::take(&mut *rec.windows.lock().unwrap());
        (events, windows)
    };
    let (clean, clean_windows) = run(false, true);
    let (noisy, noisy_windows) = run(true, true);
    let (silent, _) = run(false, false);

    // Predictor inputs do not depend on predictor outputs.
    let same_windows = clean_windows == noisy_windows;
    let same_cache = lines_of(&clean, "chord_cached") == lines_of(&noisy, "chord_cached");
    let noise_played = lines_of(&clean, "chord_predicted") != lines_of(&noisy, "chord_predicted");
    // Every chord a window shows is the arranger's chord for that beat.
    let cache: Vec<Chord> = clean
        .iter()
        .filter_map(|e| match e {
            StreamEvent::ChordCached { chord, .. } => Some(chord.clone()),
            _ => None,
        })
        .collect();
    let mut from_cache = true;
    for (k, w) in clean_windows.iter().enumerate() {
        let query = k + 1;
        for (i, slot) in w.slots().iter().enumerate() {
            let Some(obs) = slot else { continue };
            let beat = query + i - w.slots().len();
            if let Some(c) = &obs.cached_chord {
                from_cache &= cache.get(beat) == Some(c);
            }
        }
    }
    // Rendering switched off: identical prediction log, byte for byte.
    let identical_log = lines_of(&clean, "chord_predicted") == lines_of(&silent, "chord_predicted");
    check(
        same_windows && same_cache && noise_played && from_cache && identical_log,
        format!(
            "{} windows identical under a random-output predictor: {same_windows}; cache unchanged: {same_cache}; \
             window chords all from cache: {from_cache}; chord_predicted log byte-identical without rendering: {identical_log}",
            clean_windows.len()
        ),
    )
}

// ---------------------------------------------------------------- A4

fn brute_force(crf: &Crf, feats: &[Vec<u32>]) -> Vec<Vec<f64>> {
    let (l, n) = (crf.labels(), feats.len());
    let w = crf.weights();
    let f = crf.features();
    let mut z = 0.0;
    let mut marg = vec![vec![0.0; l]; n];
    let mut labels = vec![0usize; n];
    loop {
        let mut s = 0.0;
        for k in 0..n {
            for &a in &feats[k] {
                s += w[a as usize * l + labels[k]];
            }
            if k > 0 && crf.has_transitions() {
                s += w[f * l + labels[k - 1] * l + labels[k]];
            }
        }
        let p = s.exp();
        z += p;
        for k in 0..n {
            marg[k][labels[k]] += p;
        }
        let mut k = 0;
        while k < n && labels[k] == l - 1 {
            labels[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
        labels[k] += 1;
    }
    marg.iter().map(|row| row.iter().map(|v| v / z).collect()).collect()
}

fn a4(t: &mut Trained) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let labels = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=6);
        let features = rng.gen_range(1..=8);
        let transitions = rng.gen_bool(0.8);
        let count = Crf::weight_count(labels, features, transitions);
        let weights = (0..count).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let crf = Crf::from_weights(labels, features, transitions, weights).unwrap();
        let feats: Vec<Vec<u32>> =
            (0..n).map(|_| (0..features as u32).filter(|_| rng.gen_bool(0.4)).collect()).collect();
        let oracle = brute_force(&crf, &feats);
        let frontier = crf.frontier_marginal(&feats);
        let all = crf.marginals(&feats);
        for (got, want) in frontier.iter().zip(&oracle[n - 1]).chain(all.iter().flatten().zip(oracle.iter().flatten())) {
            worst = worst.max((got - want).abs() / want.abs().max(1e-300));
        }
    }
    let pieces: Vec<(Score, Vec<Chord>)> = t.scores.iter().map(|s| (s.clone(), s.chords.clone())).collect();
    let (model, report) = CrfModel::train(&pieces, TemplateSet::standard().clone(), TrainConfig::default()).map_err(|e| e.to_string())?;
    let obj = &report.objective;
    let monotone = obj.windows(2).all(|w| w[1] <= w[0]);
    t.crf = Some(Arc::new(model));
    check(
        worst <= 1e-9 && monotone,
        format!(
            "1000 random models (<=5 labels x <=6 positions): worst relative marginal error {worst:.2e} (limit 1e-9); \
             training NLL non-increasing over {} iterations (cost 4.0, frequency 3): {monotone}, {:.3} -> {:.3}",
            report.iterations(),
            obj[0],
            obj[obj.len() - 1]
        ),
    )
}

// ---------------------------------------------------------------- A5

fn gradient_check(scores: &[Score]) -> (usize, f64) {
    let config = ArrangerConfig { seed: 17, ..ArrangerConfig::desk() };
    let mut model = ArrangerModel::new(config, lookahead::score::ChordVocab::from_scores(scores)).unwrap();
    let examples = training_examples(&model, scores).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // At 1e-3 the truncation error of the difference quotient reaches 1e-2 on
    // shared biases at this width; 1e-4 keeps both it and cancellation small.
    let h = 1e-4;
    let (mut checked, mut worst) = (0, 0.0f64);
    for ex in examples.iter().step_by(examples.len() / 3) {
        let mut g = model.params().zeros_like();
        model.loss_and_grad(&ex.input, ex.target, None, &mut g).unwrap();
        for ti in 0..g.len() {
            for _ in 0..4 {
                let (rows, cols) = g[ti].dim();
                let (r, c) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
                let an = g[ti][[r, c]];
                let orig = model.params().tensors[ti][[r, c]];
                model.params_mut().tensors[ti][[r, c]] = orig + h;
                let up = model.loss(&ex.input, ex.target).unwrap();
                model.params_mut().tensors[ti][[r, c]] = orig - h;
                let down = model.loss(&ex.input, ex.target).unwrap();
                model.params_mut().tensors[ti][[r, c]] = orig;
                let fd = (up - down) / (2.0 * h);
                // Below 1e-6 the quotient is dominated by cancellation; exact
                // zeros (key biases, unused embedding rows) land here too.
                if an.abs().max(fd.abs()) < 1e-6 {
                    continue;
                }
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()));
                checked += 1;
            }
        }
    }
    (checked, worst)
}

fn a5(t: &mut Trained) -> Verdict {
    let (checked, worst) = gradient_check(&t.scores);
    let started = Instant::now();
    let (model, history) =
        train_arranger(&t.scores, ArrangerConfig::desk(), FeatureMask::ALL, |_, _| true).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let examples = training_examples(&model, &t.scores).map_err(|e| e.to_string())?;
    let tf = teacher_forced_accuracy(&model, &examples).map_err(|e| e.to_string())?;
    let closed = streaming_accuracy(&model, &t.scores).map_err(|e| e.to_string())?;
    t.arranger = Some(Arc::new(model));
    check(
        tf >= 0.95 && elapsed < Duration::from_secs(1800) && worst <= 1e-4 && checked > 100,
        format!(
            "desk preset on {} pieces: beat-chord accuracy {tf:.3} teacher-forced (limit 0.95), {closed:.3} closed-loop, \
             after {} epochs in {:.0} s (limit 1800 s); gradient check {checked} entries at step 1e-4, worst relative error {worst:.1e} (limit 1e-4)",
            t.scores.len(),
            history.len() - 1,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- A6

fn a6() -> Verdict {
    let map = ChordMap::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut nearest = NearestOracle::default();
    let cap = FeatureConfig::default().max_splice_beats;
    let (mut bars, mut beats) = (0, 0);
    let mut mismatches: Vec<String> = Vec::new();
    let mut bound_failures = 0;
    while bars < 1000 {
        let t = random_tonality(&mut rng);
        let ts = if rng.gen_bool(0.75) { TimeSignature::FOUR_FOUR } else { TimeSignature::TWO_FOUR };
        let n_bars = 20;
        let melody = random_melody(&mut rng, n_bars * ts.beats_per_bar(), t);
        let flags = weighted_note_track(&melody, ts);
        let stats = beat_stats(&melody, &flags);
        let mut tracker = FeatureTracker::new(ts, t, map, FeatureConfig::default());
        let mut previous = None;
        for (b, samples) in melody.chunks(STEPS_PER_BEAT).enumerate() {
            let f = tracker.push_beat(samples);
            bound_failures += usize::from(!f.splice.cost_bound_holds());
            if f.weighted[..] != flags[b * STEPS_PER_BEAT..(b + 1) * STEPS_PER_BEAT] {
                mismatches.push(format!("weighted notes, beat {b}"));
            }
            if f.stats.0 != stats[b] {
                mismatches.push(format!("beat statistics, beat {b}"));
            }
            let (seg_beats, seg) = splice(&mut nearest, map, &stats[..=b], cap);
            let (entry, cost) = nearest.get(map, &seg);
            if (f.splice.beats, f.splice.stats.0, f.splice.entry, f.splice.cost) != (seg_beats, seg, entry, cost) {
                mismatches.push(format!("splice or nearest entry, beat {b}"));
            }
            let silent = stats[b].iter().all(|&w| w == 0);
            let tonic = lookahead::score::ChordMapEntry {
                quality: map.quality_index(if t.mode == Mode::Major { "maj" } else { "min" }).unwrap(),
                root: t.tonic,
            };
            let want = match previous {
                Some(p) if silent || seg_beats == 1 => p,
                Some(_) => entry,
                None if silent => tonic,
                None => entry,
            };
            if f.factor != want {
                mismatches.push(format!("weighted factor, beat {b}"));
            }
            previous = Some(want);
            beats += 1;
        }
        bars += n_bars;
    }
    let chords_checked = {
        let mut n = 0;
        for _ in 0..250 {
            let t = random_tonality(&mut rng);
            let prog = random_progression(&mut rng, map, t, 16);
            let chords: Vec<Chord> = prog.iter().map(|c| Chord::new(c.clone()).unwrap()).collect();
            if terminal_chord_flags(&harmonic_steps(&chords, t)) != terminal_flags(map, &prog, t) {
                mismatches.push(format!("terminal flags {prog:?} in {t:?}"));
            }
            for (c, p) in chords.iter().zip(&prog) {
                if structural_chord_flag(c, t) != structural(map, p, t) {
                    mismatches.push(format!("structural flag {p:?} in {t:?}"));
                }
            }
            n += prog.len();
        }
        n
    };
    let first = mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default();
    check(
        mismatches.is_empty() && bound_failures == 0,
        format!(
            "{bars} random bars ({beats} beats): weighted notes, statistics, splices and 432-entry factors vs oracles, \
             {} mismatches{first}; splice cost bound failed {bound_failures} times; {chords_checked} chords: terminal and structural flags vs oracles",
            mismatches.len()
        ),
    )
}

// ---------------------------------------------------------------- A7

fn a7() -> Verdict {
    let map = ChordMap::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = [0.0f64; 9];
    for i in 0..500 {
        let bars = rng.gen_range(1..=8);
        let s = random_score(&mut rng, map, &format!("r{i}"), bars);
        let got = metrics::evaluate(&s, map).values();
        let m = melody_options(&s.melody);
        let c = chord_lists(&s.chords);
        let factors = beat_factors(&s, map);
        let want = [
            cpi(&c),
            cioi(&c),
            ctnctr(&m, &c),
            pcs(&m, &c),
            mctd(&m, &c),
            che(&c),
            cs(&c, s.tonality),
            hs(map, &c, s.tonality),
            wmch(map, &c, &factors),
        ];
        for k in 0..9 {
            let err = (got[k] - want[k]).abs();
            let rel = if err < 1e-12 { 0.0 } else { err / got[k].abs().max(want[k].abs()) };
            worst[k] = worst[k].max(rel);
        }
    }
    let metrics_ok = worst.iter().all(|&w| w <= 1e-9);

    // Entropy peaks at the uniform histogram.
    let mut che_ok = true;
    for _ in 0..200 {
        let k = rng.gen_range(1..=8);
        let labels: Vec<Chord> = (0..k).map(|i| Chord::new(vec![48 + i as u8, 60]).unwrap()).collect();
        let reps = rng.gen_range(1..=4);
        let uniform: Vec<Chord> = (0..k * reps).map(|i| labels[i % k].clone()).collect();
        che_ok &= (metrics::che(&uniform) - (k as f64).ln()).abs() < 1e-12;
        let mut skewed = uniform.clone();
        if k > 1 {
            skewed.push(labels[0].clone());
            che_ok &= metrics::che(&skewed) < (k as f64).ln();
        }
    }

    // Second half degraded by moving every chord a tritone.
    let base: Score = training_corpus().into_iter().find(|s| s.tonality.mode == Mode::Major && s.bars() >= 8).unwrap();
    let melody: Vec<Pitch> = base.melody.iter().copied().cycle().take(base.melody.len() * 2).collect();
    let half = base.chords.len();
    let chords: Vec<Chord> = base
        .chords
        .iter()
        .cycle()
        .take(half * 2)
        .enumerate()
        .map(|(b, c)| if b < half { c.clone() } else { c.transpose(6).unwrap() })
        .collect();
    let degraded = Score::new("degraded", base.bpm, base.time_signature, base.tonality, melody, chords).unwrap();
    let series = metric_timeseries(&degraded, map, 2);
    let n = series.len();
    let first = mean(&series[..n / 2].iter().map(|r| r.ctnctr).collect::<Vec<_>>());
    let second = mean(&series[n / 2..].iter().map(|r| r.ctnctr).collect::<Vec<_>>());
    let drop_ok = first - second >= 0.1;
    check(
        metrics_ok && che_ok && drop_ok,
        format!(
            "500 random scores, worst relative error per metric {} (limit 1e-9); CHE uniform maximum: {che_ok}; \
             timeseries CTnCTR {first:.3} -> {second:.3} after injected degradation (drop limit 0.1)",
            metrics::MetricReport::NAMES.iter().zip(worst).map(|(n, w)| format!("{n} {w:.0e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

// ---------------------------------------------------------------- A8

fn a8() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut raw = toy_corpus(25, 2024);
    raw.extend(folk_tunes());
    write_raw_dir(&dir.path().join("raw"), &raw).map_err(|e| e.to_string())?;
    let corpus = prepare_dir(&dir.path().join("raw"), &dir.path().join("clean"), None, Registers::default())
        .map_err(|e| e.to_string())?;
    let scores = &corpus.scores;

    let keys_ok = scores.iter().all(|s| matches!((s.tonality.tonic, s.tonality.mode), (0, Mode::Major) | (9, Mode::Minor)));
    let means: Vec<f64> = scores.iter().filter_map(melody_mean).collect();
    let outside: Vec<String> = scores
        .iter()
        .zip(&means)
        .filter(|(_, m)| !(60.0..=71.0).contains(*m))
        .map(|(s, m)| format!("{} {m:.2}", s.id))
        .collect();
    let register_ok = outside.is_empty();
    // Every kept piece had no chord shorter than a beat in its source.
    let short_rejected = raw
        .iter()
        .filter(|p| p.chords.iter().any(|c| c.duration < 1.0))
        .all(|p| corpus.rejected.iter().any(|r| r.id == p.id && matches!(r.reason, RejectReason::ShortChord { .. })));
    let kept_clean = scores.iter().all(|s| {
        raw.iter().find(|p| p.id == s.id).is_some_and(|p| p.chords.iter().all(|c| c.duration >= 1.0))
    });

    // Preparing the prepared corpus again changes nothing, byte for byte.
    let again: Vec<RawPiece> = scores.iter().map(RawPiece::from_score).collect();
    write_raw_dir(&dir.path().join("raw2"), &again).map_err(|e| e.to_string())?;
    prepare_dir(&dir.path().join("raw2"), &dir.path().join("clean2"), None, Registers::default()).map_err(|e| e.to_string())?;
    let read = |d: &str| std::fs::read(dir.path().join(d).join(CLEAN_FILE)).unwrap();
    let idempotent = read("clean") == read("clean2");

    let midi_ok = scores.iter().all(|s| {
        let bytes = export_midi(&score_song(s)).unwrap();
        let back = import_midi(&bytes).unwrap().to_raw_piece(&s.id).unwrap();
        prepare(&back, Registers::default()).is_ok_and(|b| &b == s)
    });
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    check(
        keys_ok && register_ok && short_rejected && kept_clean && idempotent && midi_ok && !scores.is_empty(),
        format!(
            "{} kept, {} rejected; tonic C major or A minor: {keys_ok}; melody means in [{lo:.2}, {hi:.2}] within [60,71]: {register_ok} {outside:?}; \
             no chord under one beat: {}; idempotent: {idempotent}; MIDI export/import round trip: {midi_ok}",
            scores.len(),
            corpus.rejected.len(),
            short_rejected && kept_clean
        ),
    )
}

// ---------------------------------------------------------------- A9

fn a9() -> Verdict {
    let note = |index, start, intensity| PatternNote { index, start, duration: 1.0, instrument: Instrument::Piano, intensity };
    let example = TexturePattern {
        id: PatternId::VersePiano1,
        cycle_beats: 4,
        notes: vec![note(1, 0.0, 5), note(2, 1.0, 7), note(3, 2.0, 7), note(2, 3.0, 7)],
    };
    let c = Chord::new(vec![60, 64, 67]).unwrap();
    let got: Vec<(u8, f64, f64, Instrument, u8)> = render(&example, &c, 0, TimeSignature::FOUR_FOUR)
        .iter()
        .map(|e| (e.pitch, e.onset, e.duration, e.instrument, e.intensity))
        .collect();
    let want = vec![
        (60, 0.0, 1.0, Instrument::Piano, 5),
        (64, 1.0, 1.0, Instrument::Piano, 7),
        (67, 2.0, 1.0, Instrument::Piano, 7),
        (64, 3.0, 1.0, Instrument::Piano, 7),
        (60, 0.0, 1.0, Instrument::Cello, 5),
    ];
    let bundled = PatternLibrary::standard().get(PatternId::VersePiano1) == &example;
    check(
        got == want && bundled,
        format!("C-E-G renders {got:?}; bundled VersePiano1 is this pattern: {bundled}"),
    )
}

// ---------------------------------------------------------------- driver

fn run(id: &'static str, title: &str, f: impl FnOnce() -> Verdict) -> (&'static str, bool, String) {
    let started = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let (pass, detail) = match verdict {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    let line = format!("{id} {} {title}: {detail} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, started.elapsed().as_secs_f64());
    println!("{line}");
    (id, pass, line)
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    // Criterion ids on the command line (`-- A5 A7`) restrict the run; A1-A3
    // stream with the CRF trained in A4, so A4 runs whenever they do.
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let wanted = |id: &str| {
        only.is_empty()
            || only.iter().any(|o| o == id)
            || (id == "A4" && only.iter().any(|o| ["A1", "A2", "A3"].contains(&o.as_str())))
    };
    let mut t = Trained { scores: training_corpus(), crf: None, arranger: None };
    let mut results = Vec::new();
    if wanted("A9") {
        results.push(run("A9", "texture", a9));
    }
    if wanted("A8") {
        results.push(run("A8", "data pipeline", a8));
    }
    if wanted("A7") {
        results.push(run("A7", "metrics", a7));
    }
    if wanted("A6") {
        results.push(run("A6", "feature extractors", a6));
    }
    if wanted("A4") {
        results.push(run("A4", "CRF correctness", || a4(&mut t)));
    }
    if wanted("A5") {
        results.push(run("A5", "arranger learnability", || a5(&mut t)));
    }
    if wanted("A1") {
        results.push(run("A1", "zero logical latency", || a1(&t)));
    }
    if wanted("A2") {
        results.push(run("A2", "physical latency", || a2(&t)));
    }
    if wanted("A3") {
        results.push(run("A3", "exposure-bias freedom", || a3(&t)));
    }
    results.sort_by_key(|r| r.0);

    println!("\nacceptance summary");
    for (_, _, line) in &results {
        println!("  {line}");
    }
    let failed = results.iter().filter(|r| !r.1).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
