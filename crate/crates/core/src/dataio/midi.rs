use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};

use super::RawPiece;
use crate::error::{Error, Result};
use crate::score::{unsample_melody, ChordEvent, Mode, NoteEvent, Score, TimeSignature, Tonality};
use crate::texture::{Instrument, TrackEvent as TextureEvent};

pub const TICKS_PER_QUARTER: u16 = 480;

pub const MELODY_TRACK: &str = "Melody";
pub const CHORD_TRACK: &str = "Chords";
const MELODY_VELOCITY: u8 = 100;
const CHORD_VELOCITY: u8 = 80;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidiNote {
    pub pitch: u8,
    /// Beats from the start.
    pub onset: f64,
    pub duration: f64,
    pub velocity: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidiTrack {
    pub name: String,
    pub program: u8,
    pub notes: Vec<MidiNote>,
}

/// A multi-track song: a tempo/meta track plus one track per part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidiSong {
    pub bpm: f64,
    pub time_signature: TimeSignature,
    pub tonality: Tonality,
    pub tracks: Vec<MidiTrack>,
}

impl MidiSong {
    pub fn new(bpm: f64, time_signature: TimeSignature, tonality: Tonality) -> Self {
        MidiSong {
            bpm,
            time_signature,
            tonality,
            tracks: Vec::new(),
        }
    }

    /// Appends rendered texture events, one track per instrument in a fixed
    /// order; instruments without events get no track.
    pub fn add_texture(&mut self, events: &[TextureEvent]) {
        for instrument in Instrument::ALL {
            let mut notes: Vec<MidiNote> = events
                .iter()
                .filter(|e| e.instrument == instrument)
                .map(|e| MidiNote {
                    pitch: e.pitch,
                    onset: e.onset,
                    duration: e.duration,
                    velocity: e.velocity(),
                })
                .collect();
            notes.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
            if !notes.is_empty() {
                self.tracks.push(MidiTrack {
                    name: instrument.name().to_string(),
                    program: instrument.program(),
                    notes,
                });
            }
        }
    }

    pub fn track(&self, name: &str) -> Option<&MidiTrack> {
        self.tracks.iter().find(|t| t.name == name)
    }

    /// Rebuilds a raw piece from the melody and chord tracks.
    pub fn to_raw_piece(&self, id: &str) -> Result<RawPiece> {
        let melody = self
            .track(MELODY_TRACK)
            .ok_or_else(|| Error::Midi(format!("no {MELODY_TRACK} track")))?
            .notes
            .iter()
            .map(|n| NoteEvent {
                pitch: n.pitch,
                onset: n.onset,
                duration: n.duration,
            })
            .collect();
        let mut groups: BTreeMap<(u64, u64), Vec<u8>> = BTreeMap::new();
        for n in &self.track(CHORD_TRACK).ok_or_else(|| Error::Midi(format!("no {CHORD_TRACK} track")))?.notes {
            groups.entry((n.onset.to_bits(), n.duration.to_bits())).or_default().push(n.pitch);
        }
        let mut chords: Vec<ChordEvent> = groups
            .into_iter()
            .map(|((o, d), mut pitches)| {
                pitches.sort_unstable();
                ChordEvent {
                    pitches,
                    onset: f64::from_bits(o),
                    duration: f64::from_bits(d),
                }
            })
            .collect();
        chords.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        Ok(RawPiece {
            id: id.to_string(),
            bpm: self.bpm,
            time_signature: self.time_signature.to_string(),
            tonality: self.tonality,
            melody,
            chords,
        })
    }
}

/// Melody and chord tracks of a score.
pub fn score_song(score: &Score) -> MidiSong {
    let mut song = MidiSong::new(score.bpm, score.time_signature, score.tonality);
    let melody = unsample_melody(&score.melody)
        .into_iter()
        .map(|n| MidiNote {
            pitch: n.pitch,
            onset: n.onset,
            duration: n.duration,
            velocity: MELODY_VELOCITY,
        })
        .collect();
    let mut chords = Vec::new();
    for e in super::RawPiece::from_score(score).chords {
        for p in e.pitches {
            chords.push(MidiNote {
                pitch: p,
                onset: e.onset,
                duration: e.duration,
                velocity: CHORD_VELOCITY,
            });
        }
    }
    song.tracks.push(MidiTrack {
        name: MELODY_TRACK.into(),
        program: 0,
        notes: melody,
    });
    song.tracks.push(MidiTrack {
        name: CHORD_TRACK.into(),
        program: 0,
        notes: chords,
    });
    song
}

fn ticks(beats: f64) -> u32 {
    (beats * TICKS_PER_QUARTER as f64).round() as u32
}

/// Sharps (positive) or flats of the key signature.
fn key_sharps(t: Tonality) -> i8 {
    let major = match t.mode {
        Mode::Major => t.tonic,
        Mode::Minor => (t.tonic + 3) % 12,
    };
    let f = (major as i32 * 7).rem_euclid(12);
    (if f > 6 { f - 12 } else { f }) as i8
}

fn key_tonality(sharps: i8, minor: bool) -> Tonality {
    let major = (sharps as i32 * 7).rem_euclid(12) as u8;
    if minor {
        Tonality {
            tonic: (major + 9) % 12,
            mode: Mode::Minor,
        }
    } else {
        Tonality {
            tonic: major,
            mode: Mode::Major,
        }
    }
}

fn with_deltas(mut events: Vec<(u32, u8, TrackEventKind<'_>)>) -> Vec<TrackEvent<'_>> {
    events.sort_by_key(|&(t, order, _)| (t, order));
    let mut last = 0;
    let mut out: Vec<TrackEvent> = events
        .into_iter()
        .map(|(t, _, kind)| {
            let delta = u28::new(t - last);
            last = t;
            TrackEvent { delta, kind }
        })
        .collect();
    out.push(TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Meta(MetaMessage::EndOfTrack),
    });
    out
}

fn tempo_of(bpm: f64) -> u32 {
    (60e6 / bpm).round() as u32
}

/// Microseconds per quarter back to BPM. The tempo field is an integer, so
/// most BPMs do not survive exactly; the shortest decimal that encodes to the
/// same field is taken.
fn bpm_of(tempo: u32) -> f64 {
    let exact = 60e6 / tempo as f64;
    (0..=6)
        .map(|d| {
            let scale = 10f64.powi(d);
            (exact * scale).round() / scale
        })
        .find(|&b| b > 0.0 && tempo_of(b) == tempo)
        .unwrap_or(exact)
}

/// Standard MIDI file, format 1, 480 ticks per quarter note. Track 0 carries
/// tempo, meter and key; each part gets its own track and channel.
pub fn export_midi(song: &MidiSong) -> Result<Vec<u8>> {
    if song.tracks.len() > 15 {
        return Err(Error::Midi("at most 15 parts fit the channel map".into()));
    }
    let mut smf = Smf::new(Header::new(Format::Parallel, Timing::Metrical(u15::new(TICKS_PER_QUARTER))));
    let tempo = tempo_of(song.bpm);
    smf.tracks.push(with_deltas(vec![
        (0, 0, TrackEventKind::Meta(MetaMessage::Tempo(u24::new(tempo)))),
        (
            0,
            1,
            TrackEventKind::Meta(MetaMessage::TimeSignature(song.time_signature.beats_per_bar() as u8, 2, 24, 8)),
        ),
        (
            0,
            2,
            TrackEventKind::Meta(MetaMessage::KeySignature(key_sharps(song.tonality), song.tonality.mode == Mode::Minor)),
        ),
    ]));
    for (i, track) in song.tracks.iter().enumerate() {
        // Channel 9 is reserved for percussion.
        let channel = u4::new(if i >= 9 { i as u8 + 1 } else { i as u8 });
        let mut events = vec![
            (0, 0, TrackEventKind::Meta(MetaMessage::TrackName(track.name.as_bytes()))),
            (
                0,
                1,
                TrackEventKind::Midi {
                    channel,
                    message: MidiMessage::ProgramChange {
                        program: u7::new(track.program & 0x7f),
                    },
                },
            ),
        ];
        for n in &track.notes {
            let on = ticks(n.onset);
            let off = ticks(n.onset + n.duration);
            if off <= on {
                return Err(Error::Midi(format!("note {} at {} has no length", n.pitch, n.onset)));
            }
            let key = u7::new(n.pitch & 0x7f);
            events.push((
                off,
                2,
                TrackEventKind::Midi {
                    channel,
                    message: MidiMessage::NoteOff { key, vel: u7::new(0) },
                },
            ));
            events.push((
                on,
                3,
                TrackEventKind::Midi {
                    channel,
                    message: MidiMessage::NoteOn {
                        key,
                        vel: u7::new(n.velocity.clamp(1, 127)),
                    },
                },
            ));
        }
        smf.tracks.push(with_deltas(events));
    }
    let mut out = Vec::new();
    smf.write_std(&mut out)?;
    Ok(out)
}

pub fn import_midi(bytes: &[u8]) -> Result<MidiSong> {
    let smf = Smf::parse(bytes).map_err(|e| Error::Midi(e.to_string()))?;
    let tpq = match smf.header.timing {
        Timing::Metrical(t) => t.as_int() as f64,
        Timing::Timecode(..) => return Err(Error::Midi("timecode timing is not supported".into())),
    };
    let mut song = MidiSong::new(120.0, TimeSignature::FOUR_FOUR, Tonality::C_MAJOR);
    for track in &smf.tracks {
        let mut now = 0u32;
        let mut name = None;
        let mut program = 0;
        let mut open: HashMap<u8, VecDeque<(u32, u8)>> = HashMap::new();
        let mut notes = Vec::new();
        for ev in track {
            now += ev.delta.as_int();
            match ev.kind {
                TrackEventKind::Meta(MetaMessage::Tempo(t)) => song.bpm = bpm_of(t.as_int()),
                TrackEventKind::Meta(MetaMessage::TimeSignature(n, d, ..)) => {
                    song.time_signature = TimeSignature::new(n as u32, 1u32 << d)?;
                }
                TrackEventKind::Meta(MetaMessage::KeySignature(sharps, minor)) => {
                    song.tonality = key_tonality(sharps, minor);
                }
                TrackEventKind::Meta(MetaMessage::TrackName(n)) => name = Some(String::from_utf8_lossy(n).into_owned()),
                TrackEventKind::Midi { message, .. } => match message {
                    MidiMessage::ProgramChange { program: p } => program = p.as_int(),
                    MidiMessage::NoteOn { key, vel } if vel.as_int() > 0 => {
                        open.entry(key.as_int()).or_default().push_back((now, vel.as_int()));
                    }
                    MidiMessage::NoteOn { key, .. } | MidiMessage::NoteOff { key, .. } => {
                        if let Some((start, velocity)) = open.get_mut(&key.as_int()).and_then(|q| q.pop_front()) {
                            notes.push(MidiNote {
                                pitch: key.as_int(),
                                onset: start as f64 / tpq,
                                duration: (now - start) as f64 / tpq,
                                velocity,
                            });
                        }
                    }
                    _ => {}
                },
                _ => {}
            }
        }
        if open.values().any(|q| !q.is_empty()) {
            return Err(Error::Midi("unbalanced note-on".into()));
        }
        if let Some(name) = name {
            notes.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
            song.tracks.push(MidiTrack { name, program, notes });
        }
    }
    Ok(song)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{sample_score, Chord};

    fn toy() -> Score {
        let notes = [(60, 0.0, 1.0), (64, 1.0, 0.5), (65, 1.5, 0.5), (67, 2.0, 2.0), (72, 4.25, 0.75)]
            .map(|(pitch, onset, duration)| NoteEvent { pitch, onset, duration });
        let chords = [
            ChordEvent { pitches: vec![48, 52, 55], onset: 0.0, duration: 2.0 },
            ChordEvent { pitches: vec![43, 47, 50, 53], onset: 2.0, duration: 2.0 },
            ChordEvent { pitches: vec![48, 52, 55], onset: 4.0, duration: 4.0 },
        ];
        sample_score("toy", &notes, &chords, 80.0, TimeSignature::FOUR_FOUR, Tonality::new(7, Mode::Minor).unwrap())
            .unwrap()
    }

    #[test]
    fn inexact_tempos_come_back_unchanged() {
        for bpm in [72.0, 97.0, 133.5, 60.125] {
            assert_eq!(bpm_of(tempo_of(bpm)), bpm);
        }
    }

    #[test]
    fn score_round_trip() {
        let score = toy();
        let bytes = export_midi(&score_song(&score)).unwrap();
        let song = import_midi(&bytes).unwrap();
        assert_eq!(song.bpm, 80.0);
        assert_eq!(song.tonality, score.tonality);
        let raw = song.to_raw_piece("toy").unwrap();
        let back = sample_score("toy", &raw.melody, &raw.chords, raw.bpm, score.time_signature, raw.tonality).unwrap();
        assert_eq!(back, score);
    }

    #[test]
    fn header_and_tracks() {
        let bytes = export_midi(&MidiSong::new(80.0, TimeSignature::TWO_FOUR, Tonality::C_MAJOR)).unwrap();
        let smf = Smf::parse(&bytes).unwrap();
        assert_eq!(smf.header.format, Format::Parallel);
        assert_eq!(smf.header.timing, Timing::Metrical(u15::new(480)));
        assert_eq!(smf.tracks.len(), 1);
        assert!(smf.tracks[0].iter().any(|e| e.kind == TrackEventKind::Meta(MetaMessage::Tempo(u24::new(750_000)))));
    }

    #[test]
    fn texture_tracks_per_instrument() {
        let c = Chord::new(vec![48, 52, 55]).unwrap();
        let lib = crate::texture::PatternLibrary::standard();
        let mut events = crate::texture::render(lib.get(crate::texture::PatternId::VersePiano1), &c, 0, TimeSignature::FOUR_FOUR);
        events.extend(crate::texture::render(lib.get(crate::texture::PatternId::VerseGuitar), &c, 0, TimeSignature::FOUR_FOUR));
        let mut song = score_song(&toy());
        song.add_texture(&events);
        let song_tracks = song.tracks.len();
        let back = import_midi(&export_midi(&song).unwrap()).unwrap();
        assert_eq!(Smf::parse(&export_midi(&song).unwrap()).unwrap().tracks.len(), song_tracks + 1);
        assert_eq!(back.tracks, song.tracks);
    }

    #[test]
    fn key_signatures_round_trip() {
        for tonic in 0..12 {
            for mode in [Mode::Major, Mode::Minor] {
                let t = Tonality { tonic, mode };
                assert_eq!(key_tonality(key_sharps(t), mode == Mode::Minor), t);
                assert!(key_sharps(t).abs() <= 6);
            }
        }
    }
}
