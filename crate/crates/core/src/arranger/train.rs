//! Teacher-forced training: every beat of every piece becomes one example
//! whose decoder tail holds the gold chords of the preceding beats, with all
//! features computed exactly as a stream would compute them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::model::{ArrangerConfig, ArrangerModel, EncodedInput};
use super::nn::{Mat, Params};
use super::{ArrangementStream, FeatureMask};
use crate::error::{Error, Result};
use crate::score::ChordVocab;
use crate::Score;

#[derive(Clone, Debug)]
pub struct Example {
    pub input: EncodedInput,
    pub target: usize,
    pub piece: usize,
    pub beat: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpochStats {
    /// 0 is the untrained model.
    pub epoch: usize,
    /// Mean training loss over the epoch (dropout active); for epoch 0 the
    /// evaluation loss of the initial model.
    pub loss: f64,
}

/// Teacher-forced examples under the model's feature mask.
pub fn training_examples(model: &ArrangerModel, scores: &[Score]) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (piece, score) in scores.iter().enumerate() {
        let mut stream = ArrangementStream::new(score.time_signature, score.tonality, model.mask());
        for beat in 0..score.beats() {
            let tokens = stream.encode_beat(score.melody_beat(beat))?;
            let input = model.encode(&tokens, &stream.cache_tail())?;
            let gold = &score.chords[beat];
            out.push(Example { input, target: model.vocab().id(gold).index(), piece, beat });
            stream.record(gold);
        }
    }
    Ok(out)
}

pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(params: &Params, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &[Mat]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.learning_rate);
        for ((p, g), (m, v)) in params.tensors.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Mean loss over a set of examples and its summed gradient. Chunks are
/// fixed, so the result does not depend on thread scheduling.
fn batch_gradient(model: &ArrangerModel, examples: &[&Example], epoch: usize, seed: u64) -> Result<(f64, Vec<Mat>)> {
    const CHUNK: usize = 8;
    let parts: Vec<Result<(f64, Vec<Mat>)>> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = model.params().zeros_like();
            let mut loss = 0.0;
            for ex in chunk {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                rng.set_stream(((ex.piece as u64) << 32) | ex.beat as u64);
                loss += model.loss_and_grad(&ex.input, ex.target, Some(&mut rng), &mut g)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = model.params().zeros_like();
    for part in parts {
        let (l, g) = part?;
        total += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let n = examples.len().max(1) as f64;
    grads.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grads))
}

/// Mean cross-entropy without dropout.
pub fn evaluation_loss(model: &ArrangerModel, examples: &[Example]) -> Result<f64> {
    let losses: Result<Vec<f64>> = examples.par_iter().map(|e| model.loss(&e.input, e.target)).collect();
    Ok(losses?.iter().sum::<f64>() / examples.len().max(1) as f64)
}

/// Trains a fresh model. `on_epoch` sees the stats after every epoch
/// (epoch 0 is the initial model) and returns `false` to stop early.
pub fn train_arranger(
    scores: &[Score],
    config: ArrangerConfig,
    mask: FeatureMask,
    mut on_epoch: impl FnMut(&EpochStats, &ArrangerModel) -> bool,
) -> Result<(ArrangerModel, Vec<EpochStats>)> {
    if scores.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let bars: usize = scores.iter().map(Score::bars).sum();
    if bars < config.batch_bars {
        return Err(Error::CorpusTooSmall { bars, batch: config.batch_bars });
    }
    let mut model = ArrangerModel::new(config, ChordVocab::from_scores(scores))?.with_mask(mask);
    let examples = training_examples(&model, scores)?;

    // Examples grouped by bar, the unit of batching and shuffling.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut key = None;
    for (i, e) in examples.iter().enumerate() {
        let bar = (e.piece, e.beat / scores[e.piece].time_signature.beats_per_bar());
        if key != Some(bar) {
            groups.push(Vec::new());
            key = Some(bar);
        }
        groups.last_mut().expect("group").push(i);
    }

    let mut history = vec![EpochStats { epoch: 0, loss: evaluation_loss(&model, &examples)? }];
    if !on_epoch(&history[0], &model) {
        return Ok((model, history));
    }
    let mut adam = Adam::new(model.params(), config.learning_rate);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    for epoch in 1..=config.epochs {
        groups.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for batch in groups.chunks(config.batch_bars) {
            let members: Vec<&Example> = batch.iter().flatten().map(|&i| &examples[i]).collect();
            let (loss, grads) = batch_gradient(&model, &members, epoch, config.seed)?;
            loss_sum += loss * members.len() as f64;
            adam.step(model.params_mut(), &grads);
        }
        let stats = EpochStats { epoch, loss: loss_sum / examples.len() as f64 };
        history.push(stats);
        if !on_epoch(&stats, &model) {
            break;
        }
    }
    Ok((model, history))
}

/// Share of examples whose greedy label equals the target.
pub fn teacher_forced_accuracy(model: &ArrangerModel, examples: &[Example]) -> Result<f64> {
    let hits: Result<Vec<bool>> =
        examples.par_iter().map(|e| Ok(model.predict_id(&e.input)?.index() == e.target)).collect();
    Ok(hits?.iter().filter(|&&h| h).count() as f64 / examples.len().max(1) as f64)
}

/// Share of beats labelled correctly when the model runs on its own cache,
/// as it does in a stream.
pub fn streaming_accuracy(model: &ArrangerModel, scores: &[Score]) -> Result<f64> {
    let per_piece: Result<Vec<(usize, usize)>> = scores
        .par_iter()
        .map(|score| {
            let chords = super::arrange_score(model, score)?;
            Ok((chords.iter().zip(&score.chords).filter(|(a, b)| a == b).count(), score.beats()))
        })
        .collect();
    let (hits, total) = per_piece?.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(hits as f64 / total.max(1) as f64)
}
