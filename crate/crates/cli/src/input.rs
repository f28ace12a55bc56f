//! Melody sources for `run-stream`: wire messages or a corpus record.

use anyhow::{bail, Context};

use lookahead::pipeline::ClientMessage;
use lookahead::{Pitch, Score, TimeSignature, Tonality};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamInput {
    pub bpm: Option<f64>,
    pub tonality: Option<Tonality>,
    pub time_signature: Option<TimeSignature>,
    /// `(step, pitch)` in arrival order; steps may skip.
    pub samples: Vec<(usize, Pitch)>,
}

/// Lines carrying a `"type"` key are wire messages; anything else is read
/// as corpus records, of which record `piece` is played.
pub fn parse(text: &str, piece: usize) -> anyhow::Result<StreamInput> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
    let Some(&(_, first)) = lines.first() else {
        bail!("input is empty");
    };
    let first: serde_json::Value = serde_json::from_str(first).context("input line 1 is not JSON")?;
    if first.get("type").is_none() {
        let (n, line) = *lines.get(piece).with_context(|| format!("input holds {} records, no piece {piece}", lines.len()))?;
        let score = Score::from_json_line(line).with_context(|| format!("input line {}", n + 1))?;
        return Ok(StreamInput {
            bpm: Some(score.bpm),
            tonality: Some(score.tonality),
            time_signature: Some(score.time_signature),
            samples: score.melody.iter().copied().enumerate().collect(),
        });
    }
    let mut out = StreamInput::default();
    let mut started = false;
    for (n, line) in lines {
        match ClientMessage::parse(line).with_context(|| format!("input line {}", n + 1))? {
            ClientMessage::Start { bpm, tonality, time_signature } if !started => {
                started = true;
                out.bpm = Some(bpm);
                out.tonality = tonality;
                out.time_signature = time_signature;
            }
            ClientMessage::Start { .. } => bail!("input line {}: second start message", n + 1),
            ClientMessage::MelodyIn { step, pitch } => out.samples.push((step, pitch)),
            ClientMessage::End => break,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_wire_messages_up_to_end() {
        let text = r#"{"type":"start","bpm":100}
{"type":"melody_in","step":0,"pitch":60}

{"type":"melody_in","step":2,"pitch":null}
{"type":"end"}
{"type":"melody_in","step":3,"pitch":62}
"#;
        let i = parse(text, 0).unwrap();
        assert_eq!(i.bpm, Some(100.0));
        assert_eq!(i.samples, vec![(0, Pitch::new(60).unwrap()), (2, Pitch::REST)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse("", 0).is_err());
        assert!(parse("{\"type\":\"melody_in\"}", 0).is_err());
        assert!(parse("[1,2]", 0).is_err());
    }
}
