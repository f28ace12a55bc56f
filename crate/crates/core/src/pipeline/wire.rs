//! Messages exchanged with a client, one JSON object per line or per
//! WebSocket text frame, discriminated by `"type"`.

use serde::{Deserialize, Serialize};

use super::clock::ClockMode;
use crate::error::{Error, Result};
use crate::texture::TrackEvent;
use crate::{Chord, Pitch, TimeSignature, Tonality};

pub const DEFAULT_BPM: f64 = 80.0;

fn default_bpm() -> f64 {
    DEFAULT_BPM
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Start {
        #[serde(default = "default_bpm")]
        bpm: f64,
        #[serde(default)]
        tonality: Option<Tonality>,
        #[serde(default)]
        time_signature: Option<TimeSignature>,
    },
    MelodyIn {
        step: usize,
        /// Required even for a rest, which is sent as `null`.
        #[serde(deserialize_with = "Pitch::deserialize")]
        pitch: Pitch,
    },
    End,
}

impl ClientMessage {
    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Protocol(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireNote {
    pub instr: String,
    pub pitch: u8,
    /// Absolute position in beats.
    pub onset: f64,
    pub dur: f64,
    pub vel: u8,
}

impl From<&TrackEvent> for WireNote {
    fn from(e: &TrackEvent) -> Self {
        WireNote {
            instr: e.instrument.name().to_lowercase(),
            pitch: e.pitch,
            onset: e.onset,
            dur: e.duration,
            vel: e.velocity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccompOut {
    pub beat: usize,
    pub chord: Chord,
    pub tracks: Vec<WireNote>,
    pub emit_ts_us: u64,
    /// The chord repeats the previous prediction because melody input
    /// starved.
    pub hold: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean_us: f64,
    pub p50_us: u64,
    pub p99_us: u64,
    pub max_us: u64,
}

impl LatencySummary {
    /// Nearest-rank percentiles.
    pub fn of(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_unstable();
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        LatencySummary {
            mean_us: s.iter().sum::<u64>() as f64 / s.len() as f64,
            p50_us: rank(0.5),
            p99_us: rank(0.99),
            max_us: *s.last().expect("non-empty"),
        }
    }
}

/// End-of-stream accounting. Logical latency of beat `b` is
/// `emit_ts(b) - onset(b)` in beats; physical latency is the wall-clock
/// time spent predicting and rendering the beat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub clock: ClockMode,
    pub bpm: f64,
    /// Beats with accompaniment emitted, in order.
    pub beats: Vec<usize>,
    pub logical_latency_beats: Vec<f64>,
    pub max_logical_latency_beats: f64,
    pub mean_margin_beats: f64,
    pub min_margin_beats: f64,
    pub physical_latency_us: Vec<u64>,
    pub physical: LatencySummary,
    pub underruns: usize,
    pub stale_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    MelodyIn { step: usize, beat: usize, pitch: Pitch, ts_us: u64 },
    ChordCached { beat: usize, chord: Chord, ts_us: u64 },
    ChordPredicted { beat: usize, chord: Chord, stale: bool, ts_us: u64 },
    AccompOut(AccompOut),
    LatencyReport(LatencyReport),
    Error { message: String, fatal: bool, ts_us: u64 },
}

impl StreamEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            StreamEvent::MelodyIn { .. } => "melody_in",
            StreamEvent::ChordCached { .. } => "chord_cached",
            StreamEvent::ChordPredicted { .. } => "chord_predicted",
            StreamEvent::AccompOut(_) => "accomp_out",
            StreamEvent::LatencyReport(_) => "latency_report",
            StreamEvent::Error { .. } => "error",
        }
    }

    /// `None` for the report, which summarises the whole stream.
    pub fn timestamp_us(&self) -> Option<u64> {
        match self {
            StreamEvent::MelodyIn { ts_us, .. }
            | StreamEvent::ChordCached { ts_us, .. }
            | StreamEvent::ChordPredicted { ts_us, .. }
            | StreamEvent::Error { ts_us, .. } => Some(*ts_us),
            StreamEvent::AccompOut(a) => Some(a.emit_ts_us),
            StreamEvent::LatencyReport(_) => None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::Mode;

    #[test]
    fn parses_client_messages() {
        assert_eq!(
            ClientMessage::parse(r#"{"type":"melody_in","step":3,"pitch":null}"#).unwrap(),
            ClientMessage::MelodyIn { step: 3, pitch: Pitch::REST }
        );
        let start = ClientMessage::parse(r#"{"type":"start","bpm":96.0,"tonality":{"tonic":7,"mode":"major"}}"#).unwrap();
        assert_eq!(
            start,
            ClientMessage::Start { bpm: 96.0, tonality: Some(Tonality { tonic: 7, mode: Mode::Major }), time_signature: None }
        );
        assert_eq!(ClientMessage::parse(r#"{"type":"end"}"#).unwrap(), ClientMessage::End);
        assert!(ClientMessage::parse(r#"{"type":"melody_in","step":3}"#).is_err());
        assert!(ClientMessage::parse(r#"{"type":"melody_in","step":0,"pitch":200}"#).is_err());
        assert!(ClientMessage::parse("not json").is_err());
    }

    #[test]
    fn accomp_out_matches_the_wire_shape() {
        let e = StreamEvent::AccompOut(AccompOut {
            beat: 2,
            chord: Chord::new(vec![48, 52, 55]).unwrap(),
            tracks: vec![WireNote { instr: "piano".into(), pitch: 48, onset: 2.0, dur: 0.5, vel: 80 }],
            emit_ts_us: 1_312_500,
            hold: false,
        });
        let v: serde_json::Value = serde_json::from_str(&e.to_json_line()).unwrap();
        assert_eq!(v["type"], "accomp_out");
        assert_eq!(v["chord"], serde_json::json!([48, 52, 55]));
        assert_eq!(v["tracks"][0]["instr"], "piano");
        assert_eq!(v["emit_ts_us"], 1_312_500);
        assert_eq!(serde_json::from_value::<StreamEvent>(v).unwrap(), e);
    }

    #[test]
    fn nearest_rank_percentiles() {
        let s: Vec<u64> = (1..=100).collect();
        let p = LatencySummary::of(&s);
        assert_eq!((p.p50_us, p.p99_us, p.max_us), (50, 99, 100));
        assert_eq!(LatencySummary::of(&[7]).p99_us, 7);
    }
}
