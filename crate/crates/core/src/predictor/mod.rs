//! Prediction phase: a linear-chain CRF that reads the arranged-chord cache
//! and the melody of the last eight beats and returns the chord for the beat
//! after the one currently sounding.
//!
//! A window for query beat `q` covers beats `q-8 ..= q-1`. Beat `q-1` is the
//! beat in progress when the prediction is launched, so only its bar index is
//! known; any earlier beat whose cache entry has not been appended yet shows
//! an unknown chord. Training windows are built by the same function over
//! prefixes of the training cache, so the model sees the same masking it
//! meets in a stream.

pub mod crf;
pub mod lbfgs;
pub mod template;

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::score::STEPS_PER_BEAT;
use crate::{Chord, Pitch, Score, TimeSignature};
pub use crf::{argmax, Crf, Sequence, TrainConfig, TrainReport};
pub use template::{Field, Template, TemplateSet, Term};

/// Observed beats per window.
pub const WINDOW_BEATS: usize = 8;

/// What the predictor may know about one beat. `None` marks a field that is
/// not available yet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatObservation {
    pub bar_index: usize,
    pub cached_chord: Option<Chord>,
    pub longest_note: Option<Pitch>,
}

/// Eight beat slots (leading `None`s pad the start of a piece) plus the bar
/// index of the query beat.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionWindow {
    slots: Vec<Option<BeatObservation>>,
    query_bar: usize,
}

impl PredictionWindow {
    pub fn new(slots: Vec<Option<BeatObservation>>, query_bar: usize) -> Result<Self> {
        if slots.len() != WINDOW_BEATS {
            return Err(Error::WindowLength { expected: WINDOW_BEATS, got: slots.len() });
        }
        let first = slots.iter().position(Option::is_some).unwrap_or(WINDOW_BEATS);
        if slots[first..].iter().any(Option::is_none) {
            return Err(Error::MalformedWindow("padding after the first observation".into()));
        }
        Ok(PredictionWindow { slots, query_bar })
    }

    /// Window for `query_beat` from whatever the stream holds right now: the
    /// cache prefix appended so far and the melody samples received so far.
    /// The beat immediately before the query is treated as in progress.
    pub fn from_stream(cache: &[Chord], melody: &[Pitch], ts: TimeSignature, query_beat: usize) -> Self {
        let bpb = ts.beats_per_bar();
        let slots = (0..WINDOW_BEATS)
            .map(|i| {
                let beat = (query_beat + i).checked_sub(WINDOW_BEATS)?;
                let in_progress = beat + 1 == query_beat;
                let end = (beat + 1) * STEPS_PER_BEAT;
                Some(BeatObservation {
                    bar_index: beat / bpb,
                    cached_chord: if in_progress { None } else { cache.get(beat).cloned() },
                    longest_note: (!in_progress && melody.len() >= end)
                        .then(|| longest_note(&melody[end - STEPS_PER_BEAT..end])),
                })
            })
            .collect();
        PredictionWindow { slots, query_bar: query_beat / bpb }
    }

    pub fn slots(&self) -> &[Option<BeatObservation>] {
        &self.slots
    }

    pub fn query_bar(&self) -> usize {
        self.query_bar
    }

    /// Labelled positions: the non-padding slots followed by the query.
    pub fn sequence(&self) -> Vec<BeatObservation> {
        let mut seq: Vec<BeatObservation> = self.slots.iter().flatten().cloned().collect();
        seq.push(BeatObservation { bar_index: self.query_bar, cached_chord: None, longest_note: None });
        seq
    }
}

/// First note of maximal length inside the beat, or REST for a silent beat.
pub fn longest_note(samples: &[Pitch]) -> Pitch {
    let mut best = (0, Pitch::REST);
    let mut i = 0;
    while i < samples.len() {
        let p = samples[i];
        let mut j = i + 1;
        while j < samples.len() && samples[j] == p {
            j += 1;
        }
        if !p.is_rest() && j - i > best.0 {
            best = (j - i, p);
        }
        i = j;
    }
    best.1
}

/// Every window of a piece with its gold labels, as used for training. The
/// first beat is never queried because streams open on a fixed chord.
pub fn training_windows(score: &Score, cache: &[Chord]) -> Result<Vec<(PredictionWindow, Vec<Chord>)>> {
    if cache.len() != score.beats() {
        return Err(Error::InvalidScore(format!(
            "{}: cache holds {} chords for {} beats",
            score.id,
            cache.len(),
            score.beats()
        )));
    }
    Ok((1..score.beats())
        .map(|q| {
            let known = q - 1;
            let w = PredictionWindow::from_stream(&cache[..known], &score.melody[..known * STEPS_PER_BEAT], score.time_signature, q);
            let first = q.saturating_sub(WINDOW_BEATS);
            (w, score.chords[first..=q].to_vec())
        })
        .collect())
}

/// Feature strings that occur at least `min_frequency` times, in first-seen
/// order.
pub fn feature_dictionary(expanded: &[Vec<Vec<String>>], min_frequency: usize) -> Vec<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut order = Vec::new();
    for f in expanded.iter().flatten().flatten() {
        let c = counts.entry(f.as_str()).or_insert_with(|| {
            order.push(f.as_str());
            0
        });
        *c += 1;
    }
    order.into_iter().filter(|f| counts[f] >= min_frequency).map(String::from).collect()
}

/// The trained chord predictor.
#[derive(Clone, Debug)]
pub struct CrfModel {
    templates: TemplateSet,
    labels: Vec<Chord>,
    features: Vec<String>,
    feature_ids: HashMap<String, u32>,
    config: TrainConfig,
    crf: Crf,
}

/// Anything that maps a prediction window to the chord of its query beat.
pub trait Predictor: Send + Sync {
    fn predict(&self, window: &PredictionWindow) -> Result<Chord>;
}

impl Predictor for CrfModel {
    fn predict(&self, window: &PredictionWindow) -> Result<Chord> {
        Ok(self.predict_next(window).clone())
    }
}

/// Repeats the latest cached chord in the window, or `fallback` when the
/// window holds none; needs no training.
#[derive(Clone, Debug)]
pub struct EchoPredictor {
    pub fallback: Chord,
}

impl Predictor for EchoPredictor {
    fn predict(&self, window: &PredictionWindow) -> Result<Chord> {
        let latest = window.slots().iter().rev().flatten().find_map(|o| o.cached_chord.clone());
        Ok(latest.unwrap_or_else(|| self.fallback.clone()))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    templates: String,
    labels: Vec<Chord>,
    features: Vec<String>,
    transitions: bool,
    config: TrainConfig,
}

const MAGIC: &[u8; 8] = b"LKAHCRF\0";
const FORMAT_VERSION: u32 = 1;

impl CrfModel {
    /// Trains on `(score, cache)` pairs where the cache holds one arranged
    /// (or gold) chord per beat.
    pub fn train(pieces: &[(Score, Vec<Chord>)], templates: TemplateSet, config: TrainConfig) -> Result<(Self, TrainReport)> {
        let mut windows = Vec::new();
        for (score, cache) in pieces {
            windows.extend(training_windows(score, cache)?);
        }
        if windows.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut labels: Vec<Chord> = Vec::new();
        let mut label_ids: HashMap<Chord, usize> = HashMap::new();
        for c in windows.iter().flat_map(|(_, l)| l) {
            label_ids.entry(c.clone()).or_insert_with(|| {
                labels.push(c.clone());
                labels.len() - 1
            });
        }
        let expanded: Vec<Vec<Vec<String>>> = windows.iter().map(|(w, _)| templates.expand(&w.sequence())).collect();
        let features = feature_dictionary(&expanded, config.min_frequency);
        let feature_ids = index_of(&features);
        let seqs: Vec<Sequence> = expanded
            .iter()
            .zip(&windows)
            .map(|(feats, (_, gold))| Sequence {
                features: lookup(&feature_ids, feats),
                labels: gold.iter().map(|c| label_ids[c]).collect(),
            })
            .collect();
        let mut crf = Crf::new(labels.len(), features.len(), templates.has_bigram());
        let report = crf.train(&seqs, &config)?;
        let model = CrfModel { templates, labels, features, feature_ids, config, crf };
        Ok((model, report))
    }

    pub fn labels(&self) -> &[Chord] {
        &self.labels
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn crf(&self) -> &Crf {
        &self.crf
    }

    /// Active dictionary feature ids per position; strings outside the
    /// dictionary are dropped.
    pub fn extract_features(&self, window: &PredictionWindow) -> Vec<Vec<u32>> {
        lookup(&self.feature_ids, &self.templates.expand(&window.sequence()))
    }

    /// Distribution over [`CrfModel::labels`] for the query beat.
    pub fn forward_marginal(&self, window: &PredictionWindow) -> Vec<f64> {
        self.crf.frontier_marginal(&self.extract_features(window))
    }

    /// Most probable query chord; ties go to the lower label index.
    pub fn predict_next(&self, window: &PredictionWindow) -> &Chord {
        &self.labels[argmax(&self.forward_marginal(window))]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            templates: self.templates.to_string(),
            labels: self.labels.clone(),
            features: self.features.clone(),
            transitions: self.crf.has_transitions(),
            config: self.config,
        };
        checkpoint::encode(MAGIC, FORMAT_VERSION, &header, self.crf.weights())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, weights): (Header, Vec<f64>) = checkpoint::decode(MAGIC, FORMAT_VERSION, bytes)?;
        let templates = TemplateSet::parse(&h.templates)?;
        if templates.has_bigram() != h.transitions {
            return Err(Error::Checkpoint("transition flag disagrees with templates".into()));
        }
        let crf = Crf::from_weights(h.labels.len(), h.features.len(), h.transitions, weights)?;
        let feature_ids = index_of(&h.features);
        Ok(CrfModel { templates, labels: h.labels, features: h.features, feature_ids, config: h.config, crf })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&checkpoint::read(path)?)
    }
}

fn index_of(features: &[String]) -> HashMap<String, u32> {
    features.iter().enumerate().map(|(i, f)| (f.clone(), i as u32)).collect()
}

fn lookup(ids: &HashMap<String, u32>, expanded: &[Vec<String>]) -> Vec<Vec<u32>> {
    expanded.iter().map(|fs| fs.iter().filter_map(|f| ids.get(f).copied()).collect()).collect()
}
