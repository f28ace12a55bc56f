//! One-layer encoder-decoder with feature embeddings summed into every token
//! before the first attention layer (post-norm residual blocks).

use ndarray::s;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::FeatureMask;
use super::nn::{
    cross_entropy, dropout, dropout_backward, uniform, AttnCache, Attention, FeedForward, FfnCache, LayerNorm, Linear,
    LnCache, Mat, Params,
};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::predictor::argmax;
use crate::score::{ChordId, ChordMapEntry, ChordVocab, CHORDMAP_SIZE};
use crate::{Chord, Pitch};

/// Melody samples per arrangement call.
pub const ENCODER_TOKENS: usize = 4;
/// Most recent cached chords fed to the decoder.
pub const DECODER_TOKENS: usize = 3;

const PITCH_SLOTS: usize = 129;
const BEAT_SLOTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrangerConfig {
    pub width: usize,
    pub ff_width: usize,
    pub heads: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_bars: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl ArrangerConfig {
    pub fn full() -> Self {
        ArrangerConfig {
            width: 256,
            ff_width: 2048,
            heads: 8,
            dropout: 0.1,
            learning_rate: 1e-4,
            batch_bars: 50,
            epochs: 1000,
            seed: 0,
        }
    }

    /// CPU-sized model. Its learning rate is ten times the full preset's because
    /// the toy corpus yields only a few optimizer steps per epoch.
    pub fn desk() -> Self {
        ArrangerConfig { width: 64, ff_width: 256, learning_rate: 1e-3, epochs: 200, ..Self::full() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }
}

/// One sixteenth of melody with its beat-level features. `None` selects the
/// learned null embedding of a feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderToken {
    pub melody_pitch: Pitch,
    pub weighted_note: Option<bool>,
    pub weighted_factor: Option<ChordMapEntry>,
    pub beat_in_bar: Option<usize>,
}

/// One cached chord with its cadence flags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderToken {
    pub chord: Chord,
    pub structural: Option<bool>,
    pub terminal: Option<bool>,
}

/// Token ids for one arrangement call.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInput {
    /// pitch, weighted note, weighted factor, beat in bar
    pub encoder: Vec<[usize; 4]>,
    /// chord (or BOS), structural, terminal
    pub decoder: Vec<[usize; 3]>,
}

fn flag(v: Option<bool>) -> usize {
    v.map_or(2, usize::from)
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    pitch: usize,
    weighted_note: usize,
    factor: usize,
    beat: usize,
    enc_pos: usize,
    chord: usize,
    structural: usize,
    terminal: usize,
    dec_pos: usize,
    enc_attn: Attention,
    enc_ln1: LayerNorm,
    enc_ffn: FeedForward,
    enc_ln2: LayerNorm,
    dec_self: Attention,
    dec_ln1: LayerNorm,
    dec_cross: Attention,
    dec_ln2: LayerNorm,
    dec_ffn: FeedForward,
    dec_ln3: LayerNorm,
    out: Linear,
}

impl Layout {
    fn build(p: &mut Params, c: &ArrangerConfig, labels: usize, rng: &mut ChaCha8Rng) -> Self {
        let d = c.width;
        let mut table = |p: &mut Params, name: &str, rows: usize| p.add(name, uniform(rng, rows, d, 0.1));
        let pitch = table(p, "emb.pitch", PITCH_SLOTS);
        let weighted_note = table(p, "emb.weighted_note", 3);
        let factor = table(p, "emb.factor", CHORDMAP_SIZE + 1);
        let beat = table(p, "emb.beat_in_bar", BEAT_SLOTS + 1);
        let enc_pos = table(p, "emb.enc_pos", ENCODER_TOKENS);
        let chord = table(p, "emb.chord", labels + 1);
        let structural = table(p, "emb.structural", 3);
        let terminal = table(p, "emb.terminal", 3);
        let dec_pos = table(p, "emb.dec_pos", DECODER_TOKENS);
        Layout {
            pitch,
            weighted_note,
            factor,
            beat,
            enc_pos,
            chord,
            structural,
            terminal,
            dec_pos,
            enc_attn: Attention::new(p, "enc.attn", d, c.heads, rng),
            enc_ln1: LayerNorm::new(p, "enc.ln1", d),
            enc_ffn: FeedForward::new(p, "enc.ffn", d, c.ff_width, rng),
            enc_ln2: LayerNorm::new(p, "enc.ln2", d),
            dec_self: Attention::new(p, "dec.self", d, c.heads, rng),
            dec_ln1: LayerNorm::new(p, "dec.ln1", d),
            dec_cross: Attention::new(p, "dec.cross", d, c.heads, rng),
            dec_ln2: LayerNorm::new(p, "dec.ln2", d),
            dec_ffn: FeedForward::new(p, "dec.ffn", d, c.ff_width, rng),
            dec_ln3: LayerNorm::new(p, "dec.ln3", d),
            out: Linear::new(p, "out", d, labels, rng),
        }
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub struct Trace {
    input: EncodedInput,
    drop_enc_in: Option<Mat>,
    enc_attn: AttnCache,
    drop_enc_attn: Option<Mat>,
    enc_ln1: LnCache,
    enc_ffn: FfnCache,
    drop_enc_ffn: Option<Mat>,
    enc_ln2: LnCache,
    drop_dec_in: Option<Mat>,
    dec_self: AttnCache,
    drop_dec_self: Option<Mat>,
    dec_ln1: LnCache,
    dec_cross: AttnCache,
    drop_dec_cross: Option<Mat>,
    dec_ln2: LnCache,
    dec_ffn: FfnCache,
    drop_dec_ffn: Option<Mat>,
    dec_ln3: LnCache,
    last: Mat,
    pub logits: Vec<f64>,
}

impl Trace {
    /// Every attention matrix of the pass (encoder self, decoder self,
    /// decoder cross), one per head.
    pub fn attention(&self) -> impl Iterator<Item = &Mat> {
        self.enc_attn.weights.iter().chain(&self.dec_self.weights).chain(&self.dec_cross.weights)
    }
}

#[derive(Clone, Debug)]
pub struct ArrangerModel {
    config: ArrangerConfig,
    vocab: ChordVocab,
    mask: FeatureMask,
    params: Params,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ArrangerConfig,
    vocab: ChordVocab,
    mask: FeatureMask,
    tensors: Vec<(String, usize, usize)>,
}

const MAGIC: &[u8; 8] = b"LKAHARR\0";
const FORMAT_VERSION: u32 = 1;

impl ArrangerModel {
    pub fn new(config: ArrangerConfig, vocab: ChordVocab) -> Result<Self> {
        if config.width == 0 || config.heads == 0 || !config.width.is_multiple_of(config.heads) {
            return Err(Error::Checkpoint(format!("width {} and {} heads", config.width, config.heads)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::default();
        let layout = Layout::build(&mut params, &config, vocab.len(), &mut rng);
        Ok(ArrangerModel { config, vocab, mask: FeatureMask::ALL, params, layout })
    }

    /// Features the model was trained with; streams must encode the same.
    pub fn mask(&self) -> FeatureMask {
        self.mask
    }

    pub fn with_mask(mut self, mask: FeatureMask) -> Self {
        self.mask = mask;
        self
    }

    pub fn config(&self) -> &ArrangerConfig {
        &self.config
    }

    pub fn vocab(&self) -> &ChordVocab {
        &self.vocab
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Label count of the output layer (chord vocabulary including UNK).
    pub fn labels(&self) -> usize {
        self.vocab.len()
    }

    pub fn bos(&self) -> usize {
        self.vocab.len()
    }

    pub fn encode(&self, melody_beat: &[EncoderToken], cache_tail: &[DecoderToken]) -> Result<EncodedInput> {
        if melody_beat.len() != ENCODER_TOKENS {
            return Err(Error::WindowLength { expected: ENCODER_TOKENS, got: melody_beat.len() });
        }
        let encoder = melody_beat
            .iter()
            .map(|t| {
                let pitch = t.melody_pitch.midi().map_or(PITCH_SLOTS - 1, usize::from);
                let factor = t.weighted_factor.map_or(CHORDMAP_SIZE, ChordMapEntry::index);
                let beat = t.beat_in_bar.map_or(BEAT_SLOTS, |b| b.min(BEAT_SLOTS - 1));
                [pitch, flag(t.weighted_note), factor, beat]
            })
            .collect();
        let tail = &cache_tail[cache_tail.len().saturating_sub(DECODER_TOKENS)..];
        let decoder = if tail.is_empty() {
            vec![[self.bos(), 2, 2]]
        } else {
            tail.iter().map(|t| [self.vocab.id(&t.chord).index(), flag(t.structural), flag(t.terminal)]).collect()
        };
        Ok(EncodedInput { encoder, decoder })
    }

    fn check(&self, input: &EncodedInput) -> Result<()> {
        let bad = |kind, id| Err(Error::UnknownId { kind, id });
        for e in &input.encoder {
            if e[0] >= PITCH_SLOTS {
                return bad("pitch", e[0]);
            }
            if e[1] > 2 || e[3] > BEAT_SLOTS {
                return bad("encoder feature", e[1].max(e[3]));
            }
            if e[2] > CHORDMAP_SIZE {
                return bad("weighted factor", e[2]);
            }
        }
        for d in &input.decoder {
            if d[0] > self.bos() {
                return bad("chord", d[0]);
            }
            if d[1] > 2 || d[2] > 2 {
                return bad("chord flag", d[1].max(d[2]));
            }
        }
        if input.encoder.len() != ENCODER_TOKENS || input.decoder.is_empty() || input.decoder.len() > DECODER_TOKENS {
            return Err(Error::MalformedWindow("arranger input length".into()));
        }
        Ok(())
    }

    /// Summed encoder embeddings, one row per token.
    pub fn embed_encoder(&self, input: &EncodedInput) -> Mat {
        let p = &self.params.tensors;
        let l = &self.layout;
        let mut x = Mat::zeros((input.encoder.len(), self.config.width));
        for (i, e) in input.encoder.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += &p[l.pitch].row(e[0]);
            row += &p[l.weighted_note].row(e[1]);
            row += &p[l.factor].row(e[2]);
            row += &p[l.beat].row(e[3]);
            row += &p[l.enc_pos].row(i);
        }
        x
    }

    /// Summed decoder embeddings, one row per token.
    pub fn embed_decoder(&self, input: &EncodedInput) -> Mat {
        let p = &self.params.tensors;
        let l = &self.layout;
        let mut x = Mat::zeros((input.decoder.len(), self.config.width));
        for (i, d) in input.decoder.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += &p[l.chord].row(d[0]);
            row += &p[l.structural].row(d[1]);
            row += &p[l.terminal].row(d[2]);
            row += &p[l.dec_pos].row(i);
        }
        x
    }

    /// Forward pass; dropout is active only when `rng` is given.
    pub fn forward(&self, input: &EncodedInput, mut rng: Option<&mut ChaCha8Rng>) -> Result<Trace> {
        self.check(input)?;
        let p = &self.params.tensors;
        let l = &self.layout;
        let rate = self.config.dropout;

        let mut e = self.embed_encoder(input);
        let drop_enc_in = dropout(&mut e, rate, rng.as_deref_mut());
        let (mut a, enc_attn) = l.enc_attn.forward(p, &e, &e, false);
        let drop_enc_attn = dropout(&mut a, rate, rng.as_deref_mut());
        let (x1, enc_ln1) = l.enc_ln1.forward(p, &(&e + &a));
        let (mut f, enc_ffn) = l.enc_ffn.forward(p, &x1);
        let drop_enc_ffn = dropout(&mut f, rate, rng.as_deref_mut());
        let (enc, enc_ln2) = l.enc_ln2.forward(p, &(&x1 + &f));

        let mut t = self.embed_decoder(input);
        let drop_dec_in = dropout(&mut t, rate, rng.as_deref_mut());
        let (mut sa, dec_self) = l.dec_self.forward(p, &t, &t, true);
        let drop_dec_self = dropout(&mut sa, rate, rng.as_deref_mut());
        let (y1, dec_ln1) = l.dec_ln1.forward(p, &(&t + &sa));
        let (mut ca, dec_cross) = l.dec_cross.forward(p, &y1, &enc, false);
        let drop_dec_cross = dropout(&mut ca, rate, rng.as_deref_mut());
        let (y2, dec_ln2) = l.dec_ln2.forward(p, &(&y1 + &ca));
        let (mut f2, dec_ffn) = l.dec_ffn.forward(p, &y2);
        let drop_dec_ffn = dropout(&mut f2, rate, rng);
        let (y3, dec_ln3) = l.dec_ln3.forward(p, &(&y2 + &f2));

        let n = y3.nrows();
        let last = y3.slice(s![n - 1..n, ..]).to_owned();
        let logits = l.out.forward(p, &last).row(0).to_vec();
        Ok(Trace {
            input: input.clone(),
            drop_enc_in,
            enc_attn,
            drop_enc_attn,
            enc_ln1,
            enc_ffn,
            drop_enc_ffn,
            enc_ln2,
            drop_dec_in,
            dec_self,
            drop_dec_self,
            dec_ln1,
            dec_cross,
            drop_dec_cross,
            dec_ln2,
            dec_ffn,
            drop_dec_ffn,
            dec_ln3,
            last,
            logits,
        })
    }

    /// Accumulates parameter gradients for `dlogits` into `g`.
    pub fn backward(&self, trace: &Trace, dlogits: &[f64], g: &mut [Mat]) {
        let p = &self.params.tensors;
        let l = &self.layout;
        let dl = Mat::from_shape_vec((1, dlogits.len()), dlogits.to_vec()).expect("logit row");
        let dlast = l.out.backward(p, g, &trace.last, &dl);
        let n = trace.input.decoder.len();
        let mut dy3 = Mat::zeros((n, self.config.width));
        dy3.row_mut(n - 1).assign(&dlast.row(0));

        let ds = l.dec_ln3.backward(p, g, &trace.dec_ln3, &dy3);
        let df2 = dropout_backward(ds.clone(), &trace.drop_dec_ffn);
        let dy2 = ds + l.dec_ffn.backward(p, g, &trace.dec_ffn, &df2);
        let ds = l.dec_ln2.backward(p, g, &trace.dec_ln2, &dy2);
        let dca = dropout_backward(ds.clone(), &trace.drop_dec_cross);
        let (dq, denc) = l.dec_cross.backward(p, g, &trace.dec_cross, &dca);
        let dy1 = ds + dq;
        let ds = l.dec_ln1.backward(p, g, &trace.dec_ln1, &dy1);
        let dsa = dropout_backward(ds.clone(), &trace.drop_dec_self);
        let (dq, dkv) = l.dec_self.backward(p, g, &trace.dec_self, &dsa);
        let dt = dropout_backward(ds + dq + dkv, &trace.drop_dec_in);
        for (i, d) in trace.input.decoder.iter().enumerate() {
            let row = dt.row(i);
            for (table, id) in [(l.chord, d[0]), (l.structural, d[1]), (l.terminal, d[2]), (l.dec_pos, i)] {
                let mut r = g[table].row_mut(id);
                r += &row;
            }
        }

        let ds = l.enc_ln2.backward(p, g, &trace.enc_ln2, &denc);
        let df = dropout_backward(ds.clone(), &trace.drop_enc_ffn);
        let dx1 = ds + l.enc_ffn.backward(p, g, &trace.enc_ffn, &df);
        let ds = l.enc_ln1.backward(p, g, &trace.enc_ln1, &dx1);
        let da = dropout_backward(ds.clone(), &trace.drop_enc_attn);
        let (dq, dkv) = l.enc_attn.backward(p, g, &trace.enc_attn, &da);
        let de = dropout_backward(ds + dq + dkv, &trace.drop_enc_in);
        for (i, e) in trace.input.encoder.iter().enumerate() {
            let row = de.row(i);
            for (table, id) in [(l.pitch, e[0]), (l.weighted_note, e[1]), (l.factor, e[2]), (l.beat, e[3]), (l.enc_pos, i)] {
                let mut r = g[table].row_mut(id);
                r += &row;
            }
        }
    }

    /// Cross-entropy of `target` and its gradient accumulated into `g`.
    pub fn loss_and_grad(
        &self,
        input: &EncodedInput,
        target: usize,
        rng: Option<&mut ChaCha8Rng>,
        g: &mut [Mat],
    ) -> Result<f64> {
        let trace = self.forward(input, rng)?;
        let (loss, dlogits) = cross_entropy(&trace.logits, target);
        self.backward(&trace, &dlogits, g);
        Ok(loss)
    }

    pub fn loss(&self, input: &EncodedInput, target: usize) -> Result<f64> {
        Ok(cross_entropy(&self.forward(input, None)?.logits, target).0)
    }

    /// Greedy label for an encoded input, never UNK unless the vocabulary
    /// holds nothing else.
    pub fn predict_id(&self, input: &EncodedInput) -> Result<ChordId> {
        let logits = self.forward(input, None)?.logits;
        if logits.len() <= 1 {
            return Ok(ChordId::UNK);
        }
        Ok(ChordId(1 + argmax(&logits[1..]) as u32))
    }

    pub fn arrange(&self, melody_beat: &[EncoderToken], cache_tail: &[DecoderToken]) -> Result<Chord> {
        let id = self.predict_id(&self.encode(melody_beat, cache_tail)?)?;
        self.vocab.chord(id).cloned().ok_or(Error::EmptyCorpus)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self
            .params
            .names
            .iter()
            .zip(&self.params.tensors)
            .map(|(n, t)| (n.clone(), t.nrows(), t.ncols()))
            .collect();
        let header = Header { config: self.config, vocab: self.vocab.clone(), mask: self.mask, tensors };
        let blob: Vec<f64> = self.params.tensors.iter().flat_map(|t| t.iter().copied()).collect();
        checkpoint::encode(MAGIC, FORMAT_VERSION, &header, &blob)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, blob): (Header, Vec<f64>) = checkpoint::decode(MAGIC, FORMAT_VERSION, bytes)?;
        let mut model = ArrangerModel::new(h.config, h.vocab)?.with_mask(h.mask);
        if h.tensors.len() != model.params.tensors.len() {
            return Err(Error::Checkpoint("tensor count does not match the configuration".into()));
        }
        let mut at = 0;
        for ((name, rows, cols), (want, t)) in h.tensors.iter().zip(model.params.names.iter().zip(&mut model.params.tensors)) {
            if name != want || (*rows, *cols) != t.dim() {
                return Err(Error::Checkpoint(format!("tensor {name} {rows}x{cols} does not fit {want} {:?}", t.dim())));
            }
            let n = rows * cols;
            let chunk = blob.get(at..at + n).ok_or_else(|| Error::Checkpoint("parameter blob too short".into()))?;
            t.assign(&Mat::from_shape_vec((*rows, *cols), chunk.to_vec()).expect("shape checked"));
            at += n;
        }
        if at != blob.len() {
            return Err(Error::Checkpoint("parameter blob too long".into()));
        }
        if model.params.tensors.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&checkpoint::read(path)?)
    }
}
