use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Chord, Pitch, Score, TimeSignature, Tonality};
use crate::error::{Error, Result};

/// One JSON-lines record of a sampled piece.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub bpm: f64,
    pub time_signature: TimeSignature,
    pub tonality: Tonality,
    pub melody: Vec<Pitch>,
    pub chords: Vec<Chord>,
}

impl From<&Score> for ScoreRecord {
    fn from(s: &Score) -> Self {
        ScoreRecord {
            id: s.id.clone(),
            bpm: s.bpm,
            time_signature: s.time_signature,
            tonality: s.tonality,
            melody: s.melody.clone(),
            chords: s.chords.clone(),
        }
    }
}

impl TryFrom<ScoreRecord> for Score {
    type Error = Error;

    fn try_from(r: ScoreRecord) -> Result<Self> {
        Score::new(r.id, r.bpm, r.time_signature, r.tonality, r.melody, r.chords)
    }
}

impl Score {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(&ScoreRecord::from(self))?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str::<ScoreRecord>(line)?.try_into()
    }
}

pub fn read_scores(path: &Path) -> Result<Vec<Score>> {
    let file = std::fs::File::open(path).map_err(|source| Error::File { path: path.into(), source })?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Score::from_json_line(&line)?);
    }
    Ok(out)
}

pub fn write_scores(path: &Path, scores: &[Score]) -> Result<()> {
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|source| Error::File { path: path.into(), source })?,
    );
    for s in scores {
        writeln!(file, "{}", s.to_json_line()?)?;
    }
    file.flush()?;
    Ok(())
}
