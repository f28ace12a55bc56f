use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use lookahead::arranger::{ArrangementStream, ArrangerConfig, ArrangerModel, FeatureMask};
use lookahead::dataio::{folk_tunes, prepare_corpus, toy_corpus, Registers};
use lookahead::features::{FeatureConfig, FeatureTracker};
use lookahead::pipeline::{run_stream, Engines, SessionConfig};
use lookahead::predictor::{CrfModel, PredictionWindow, TemplateSet, TrainConfig};
use lookahead::score::ChordVocab;
use lookahead::{ChordMap, Pitch, Score};
use std::sync::Arc;

fn corpus() -> Vec<Score> {
    let mut raw = toy_corpus(12, 7);
    raw.extend(folk_tunes());
    prepare_corpus(&raw, Registers::default()).scores
}

fn crf(scores: &[Score]) -> CrfModel {
    let pieces: Vec<_> = scores.iter().map(|s| (s.clone(), s.chords.clone())).collect();
    let config = TrainConfig { max_iterations: 35, ..TrainConfig::default() };
    CrfModel::train(&pieces, TemplateSet::standard().clone(), config).unwrap().0
}

fn bench_predict(c: &mut Criterion) {
    let scores = corpus();
    let model = crf(&scores);
    let s = &scores[0];
    let query = s.beats() / 2;
    let window = PredictionWindow::from_stream(&s.chords[..query - 1], &s.melody, s.time_signature, query);
    c.bench_function("crf_predict_next", |b| b.iter(|| model.predict_next(black_box(&window)).clone()));
}

fn bench_arranger(c: &mut Criterion) {
    let scores = corpus();
    let s = &scores[0];
    for (name, config) in [("arranger_step_desk", ArrangerConfig::desk()), ("arranger_step_full", ArrangerConfig::full())] {
        let model = ArrangerModel::new(config, ChordVocab::from_scores(&scores)).unwrap();
        let mut stream = ArrangementStream::new(s.time_signature, s.tonality, FeatureMask::ALL);
        for b in 0..8 {
            stream.step(&model, s.melody_beat(b)).unwrap();
        }
        let tokens = stream.encode_beat(s.melody_beat(8)).unwrap();
        let tail = stream.cache_tail();
        c.bench_function(name, |b| b.iter(|| model.arrange(black_box(&tokens), black_box(&tail)).unwrap()));
    }
}

fn bench_features(c: &mut Criterion) {
    let s = &corpus()[0];
    let beats: Vec<&[Pitch]> = (0..s.beats()).map(|b| s.melody_beat(b)).collect();
    c.bench_function("feature_tracker_piece", |b| {
        b.iter(|| {
            let mut t = FeatureTracker::new(s.time_signature, s.tonality, ChordMap::standard(), FeatureConfig::default());
            for beat in &beats {
                black_box(t.push_beat(beat));
            }
        })
    });
}

fn bench_session(c: &mut Criterion) {
    let scores = corpus();
    let predictor = Arc::new(crf(&scores));
    let s = &scores[0];
    // 64 bars of 4/4 made by looping the first piece.
    let melody: Vec<Pitch> = s.melody.iter().copied().cycle().take(64 * 16).collect();
    let engines = Engines { predictor, ..Engines::untrained(s.tonality) };
    let config = SessionConfig { tonality: s.tonality, ..SessionConfig::default() };
    let mut group = c.benchmark_group("session");
    group.sample_size(10);
    group.bench_function("sim_64_bars", |b| {
        b.iter_batched(|| engines.clone(), |e| run_stream(config.clone(), e, &melody).0.len(), BatchSize::SmallInput)
    });
    group.finish();
}

criterion_group!(benches, bench_predict, bench_arranger, bench_features, bench_session);
criterion_main!(benches);
