//! Corpus normalization, storage and MIDI exchange.
//!
//! A raw piece goes through [`prepare`]: rhythm screening, sampling onto the
//! two grids, key unification, then octave placement. Octave placement runs
//! last so the register targets hold for the stored score.

mod midi;
mod toy;

pub use midi::{export_midi, import_midi, score_song, MidiNote, MidiSong, MidiTrack, TICKS_PER_QUARTER};
pub use toy::{folk_tunes, toy_corpus};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{read_file, Error, Result};
use crate::score::{
    sample_score, unsample_melody, write_scores, ChordEvent, Mode, NoteEvent, Score, TimeSignature, Tonality,
};

/// A piece as it arrives from a source corpus, before screening.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPiece {
    pub id: String,
    pub bpm: f64,
    /// Any meter, written `num/den`; screening rejects all but 4/4 and 2/4.
    pub time_signature: String,
    pub tonality: Tonality,
    pub melody: Vec<NoteEvent>,
    pub chords: Vec<ChordEvent>,
}

impl RawPiece {
    /// Event form of a sampled score; repeated beats merge into one chord event.
    pub fn from_score(score: &Score) -> Self {
        let mut chords: Vec<ChordEvent> = Vec::new();
        for (beat, chord) in score.chords.iter().enumerate() {
            match chords.last_mut() {
                Some(last) if last.pitches == chord.pitches() => last.duration += 1.0,
                _ => chords.push(ChordEvent {
                    pitches: chord.pitches().to_vec(),
                    onset: beat as f64,
                    duration: 1.0,
                }),
            }
        }
        RawPiece {
            id: score.id.clone(),
            bpm: score.bpm,
            time_signature: score.time_signature.to_string(),
            tonality: score.tonality,
            melody: unsample_melody(&score.melody),
            chords,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_file(path)?)?)
    }
}

/// Why a piece was left out of the clean corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    TimeSignature { time_signature: String },
    ShortChord { onset: f64, duration: f64 },
    Invalid { detail: String },
}

fn parse_meter(text: &str) -> Option<(u32, u32)> {
    let (n, d) = text.split_once('/')?;
    Some((n.trim().parse().ok()?, d.trim().parse().ok()?))
}

/// Keeps 4/4 and 2/4 pieces whose chords all last at least one beat.
pub fn screen_rhythm(piece: &RawPiece) -> std::result::Result<TimeSignature, RejectReason> {
    let ts = parse_meter(&piece.time_signature)
        .and_then(|(n, d)| TimeSignature::new(n, d).ok())
        .ok_or_else(|| RejectReason::TimeSignature {
            time_signature: piece.time_signature.clone(),
        })?;
    if let Some(c) = piece.chords.iter().find(|c| c.duration < 1.0 - 1e-9) {
        return Err(RejectReason::ShortChord {
            onset: c.onset,
            duration: c.duration,
        });
    }
    Ok(ts)
}

/// Shift in `(-6, 6]` taking `from` to the pitch class `to`.
pub fn minimal_shift(from: u8, to: u8) -> i32 {
    let d = (to as i32 - from as i32).rem_euclid(12);
    if d > 6 {
        d - 12
    } else {
        d
    }
}

fn transpose_score(score: &Score, melody_shift: i32, chord_shift: i32, tonality: Tonality) -> Result<Score> {
    let melody = score
        .melody
        .iter()
        .map(|p| {
            if p.is_rest() {
                Ok(*p)
            } else {
                p.transpose(melody_shift)
                    .ok_or(Error::PitchRange(p.midi().unwrap() as i64 + melody_shift as i64))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let chords = score.chords.iter().map(|c| c.transpose(chord_shift)).collect::<Result<Vec<_>>>()?;
    Score::new(score.id.clone(), score.bpm, score.time_signature, tonality, melody, chords)
}

/// Transposes to C major or A minor by the smallest shift.
pub fn unify_mode(score: &Score) -> Result<Score> {
    let target = match score.tonality.mode {
        Mode::Major => 0,
        Mode::Minor => 9,
    };
    let shift = minimal_shift(score.tonality.tonic, target);
    transpose_score(score, shift, shift, Tonality::new(target, score.tonality.mode)?)
}

/// Register targets for octave placement: the lowest pitch of the octave the
/// mean must fall in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Registers {
    pub melody_low: u8,
    pub accompaniment_low: u8,
}

impl Default for Registers {
    fn default() -> Self {
        // C4..B4 and C2..B2.
        Registers {
            melody_low: 60,
            accompaniment_low: 36,
        }
    }
}

/// Mean pitch over sounding melody samples; `None` for a silent melody.
pub fn melody_mean(score: &Score) -> Option<f64> {
    let pitches: Vec<f64> = score.melody.iter().filter_map(|p| p.midi()).map(f64::from).collect();
    (!pitches.is_empty()).then(|| pitches.iter().sum::<f64>() / pitches.len() as f64)
}

/// Mean pitch over every chord note of every beat.
pub fn accompaniment_mean(score: &Score) -> f64 {
    let (sum, n) = score.chords.iter().flat_map(|c| c.pitches()).fold((0.0, 0usize), |(s, n), &p| (s + p as f64, n + 1));
    sum / n as f64
}

/// Whole-octave shift putting `mean` into `[low, low + 12)`.
pub fn octave_shift(mean: f64, low: u8) -> i32 {
    -12 * ((mean - low as f64) / 12.0).floor() as i32
}

/// Moves melody and accompaniment by whole octaves into their registers.
pub fn transpose_octave(score: &Score, registers: Registers) -> Result<Score> {
    let m = melody_mean(score).map_or(0, |m| octave_shift(m, registers.melody_low));
    let a = octave_shift(accompaniment_mean(score), registers.accompaniment_low);
    transpose_score(score, m, a, score.tonality)
}

/// The full normalization of one piece.
pub fn prepare(piece: &RawPiece, registers: Registers) -> std::result::Result<Score, RejectReason> {
    let invalid = |e: Error| RejectReason::Invalid { detail: e.to_string() };
    let ts = screen_rhythm(piece)?;
    let score = sample_score(&piece.id, &piece.melody, &piece.chords, piece.bpm, ts, piece.tonality).map_err(invalid)?;
    let score = unify_mode(&score).map_err(invalid)?;
    transpose_octave(&score, registers).map_err(invalid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    #[serde(flatten)]
    pub reason: RejectReason,
}

/// Outcome of normalizing a corpus; both lists are sorted by piece id.
#[derive(Clone, Debug, Default)]
pub struct PreparedCorpus {
    pub scores: Vec<Score>,
    pub rejected: Vec<Rejection>,
}

pub fn prepare_corpus(pieces: &[RawPiece], registers: Registers) -> PreparedCorpus {
    let results: Vec<(String, std::result::Result<Score, RejectReason>)> =
        pieces.par_iter().map(|p| (p.id.clone(), prepare(p, registers))).collect();
    let mut out = PreparedCorpus::default();
    for (id, r) in results {
        match r {
            Ok(s) => out.scores.push(s),
            Err(reason) => out.rejected.push(Rejection { id, reason }),
        }
    }
    out.scores.sort_by(|a, b| a.id.cmp(&b.id));
    out.rejected.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Reads every `*.json` raw piece in `dir`, in file-name order.
pub fn read_raw_dir(dir: &Path) -> Result<Vec<RawPiece>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::File {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| RawPiece::load(p)).collect()
}

pub fn write_raw_dir(dir: &Path, pieces: &[RawPiece]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for p in pieces {
        let text = serde_json::to_string_pretty(p)?;
        std::fs::write(dir.join(format!("{}.json", p.id)), text + "\n")?;
    }
    Ok(())
}

/// File name of the clean corpus inside the output directory.
pub const CLEAN_FILE: &str = "corpus.jsonl";

/// Normalizes `input` (a raw directory) into `output/corpus.jsonl`; the
/// rejections go to `reject_log` as JSON lines.
pub fn prepare_dir(input: &Path, output: &Path, reject_log: Option<&Path>, registers: Registers) -> Result<PreparedCorpus> {
    let corpus = prepare_corpus(&read_raw_dir(input)?, registers);
    std::fs::create_dir_all(output)?;
    write_scores(&output.join(CLEAN_FILE), &corpus.scores)?;
    if let Some(log) = reject_log {
        let mut text = String::new();
        for r in &corpus.rejected {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        std::fs::write(log, text)?;
    }
    Ok(corpus)
}
