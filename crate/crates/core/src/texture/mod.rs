//! Texture rendering: turns a chord per beat into multi-track accompaniment.
//!
//! Patterns are written against chord-note indices rather than pitches, so
//! one pattern fits any chord. [`TextureEngine`] picks patterns bar by bar and
//! renders one beat at a time so it can run inside the stream.

mod engine;

pub use engine::{section_classify, BeatRender, Section, SectionState, Slot, TextureConfig, TextureEngine};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{read_file, Error, Result};
use crate::score::{Chord, TimeSignature};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatternId {
    VersePiano1,
    VersePiano2,
    VersePiano3,
    VerseGuitar,
    ChorusPiano1,
    ChorusPiano2,
    ChorusGuitar,
    Decorative,
}

impl PatternId {
    pub const ALL: [PatternId; 8] = [
        PatternId::VersePiano1,
        PatternId::VersePiano2,
        PatternId::VersePiano3,
        PatternId::VerseGuitar,
        PatternId::ChorusPiano1,
        PatternId::ChorusPiano2,
        PatternId::ChorusGuitar,
        PatternId::Decorative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternId::VersePiano1 => "VersePiano1",
            PatternId::VersePiano2 => "VersePiano2",
            PatternId::VersePiano3 => "VersePiano3",
            PatternId::VerseGuitar => "VerseGuitar",
            PatternId::ChorusPiano1 => "ChorusPiano1",
            PatternId::ChorusPiano2 => "ChorusPiano2",
            PatternId::ChorusGuitar => "ChorusGuitar",
            PatternId::Decorative => "Decorative",
        }
    }

    /// Bars the pattern stays active once selected.
    pub fn length_bars(self) -> usize {
        match self {
            PatternId::Decorative => 1,
            _ => 4,
        }
    }
}

impl fmt::Display for PatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternId {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        PatternId::ALL.into_iter().find(|p| p.name() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Instrument {
    Piano,
    Guitar,
    Cello,
}

impl Instrument {
    pub const ALL: [Instrument; 3] = [Instrument::Piano, Instrument::Guitar, Instrument::Cello];

    pub fn name(self) -> &'static str {
        match self {
            Instrument::Piano => "Piano",
            Instrument::Guitar => "Guitar",
            Instrument::Cello => "Cello",
        }
    }

    /// General MIDI program number.
    pub fn program(self) -> u8 {
        match self {
            Instrument::Piano => 0,
            Instrument::Guitar => 24,
            Instrument::Cello => 42,
        }
    }
}

impl FromStr for Instrument {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Instrument::ALL.into_iter().find(|i| i.name() == s).ok_or(())
    }
}

/// MIDI velocity of intensity `p1..p9`, linear from 15 to 127.
pub fn velocity(intensity: u8) -> u8 {
    debug_assert!((1..=9).contains(&intensity));
    15 + 14 * (intensity - 1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatternNote {
    /// 1-based chord-note index counted from the lowest note.
    pub index: u8,
    pub start: f64,
    pub duration: f64,
    pub instrument: Instrument,
    pub intensity: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TexturePattern {
    pub id: PatternId,
    /// Length in beats of the cycle the notes describe.
    pub cycle_beats: usize,
    pub notes: Vec<PatternNote>,
}

impl TexturePattern {
    /// Notes whose onset falls in `[beat, beat + 1)` of the cycle.
    pub fn notes_in_beat(&self, beat: usize) -> impl Iterator<Item = &PatternNote> {
        let b = beat as f64;
        self.notes.iter().filter(move |n| n.start >= b && n.start < b + 1.0)
    }
}

/// A rendered note with an absolute onset in beats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackEvent {
    pub pitch: u8,
    pub onset: f64,
    pub duration: f64,
    pub instrument: Instrument,
    pub intensity: u8,
}

impl TrackEvent {
    pub fn velocity(&self) -> u8 {
        velocity(self.intensity)
    }
}

/// Concrete pitch of chord note `index`; indices beyond the chord wrap onto
/// its notes an octave higher per lap.
pub fn resolve_index(chord: &Chord, index: u8) -> u8 {
    let pitches = chord.pitches();
    let i = (index as usize - 1) % pitches.len();
    let lap = (index as usize - 1) / pitches.len();
    let mut p = pitches[i] as usize + 12 * lap;
    while p > 127 {
        p -= 12;
    }
    p as u8
}

fn resolve(note: &PatternNote, chord: &Chord, onset: f64) -> TrackEvent {
    TrackEvent {
        pitch: resolve_index(chord, note.index),
        onset,
        duration: note.duration,
        instrument: note.instrument,
        intensity: note.intensity,
    }
}

/// Picks the piano note a cello doubles: lowest chord-note index, earliest
/// onset among equals. The choice depends on the pattern only, so it is
/// known before the bar's chords are.
pub(crate) fn cello_source<'a>(candidates: impl Iterator<Item = (&'a PatternNote, f64)>) -> Option<(&'a PatternNote, f64)> {
    candidates
        .filter(|(n, _)| n.instrument == Instrument::Piano)
        .min_by(|a, b| a.0.index.cmp(&b.0.index).then(a.1.total_cmp(&b.1)))
}

fn cello(event: &TrackEvent) -> TrackEvent {
    TrackEvent {
        instrument: Instrument::Cello,
        ..*event
    }
}

/// Renders one cycle of `pattern` over a single chord, shifted by
/// `bar_offset` bars. Each bar's lowest piano note is doubled on cello.
pub fn render(pattern: &TexturePattern, chord: &Chord, bar_offset: usize, ts: TimeSignature) -> Vec<TrackEvent> {
    let bpb = ts.beats_per_bar();
    let shift = (bar_offset * bpb) as f64;
    let mut out = Vec::new();
    for bar_start in (0..pattern.cycle_beats).step_by(bpb) {
        let bar_end = (bar_start + bpb) as f64;
        let in_bar = || {
            pattern
                .notes
                .iter()
                .filter(move |n| n.start >= bar_start as f64 && n.start < bar_end)
                .map(|n| (n, n.start))
        };
        for (n, start) in in_bar() {
            out.push(resolve(n, chord, start + shift));
        }
        if let Some((n, start)) = cello_source(in_bar()) {
            out.push(cello(&resolve(n, chord, start + shift)));
        }
    }
    out
}

/// The eight texture patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternLibrary {
    patterns: Vec<TexturePattern>,
}

const DEFAULT_CYCLE_BEATS: usize = 4;

fn syntax(line: usize, reason: impl Into<String>) -> Error {
    Error::PatternSyntax {
        line,
        reason: reason.into(),
    }
}

fn parse_note(line: usize, text: &str, cycle: usize) -> Result<PatternNote> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    let [index, start, duration, instrument, intensity] = fields[..] else {
        return Err(syntax(line, "expected idx,start,dur,instrument,intensity"));
    };
    let index: u8 = index.parse().map_err(|_| syntax(line, format!("bad index {index:?}")))?;
    let start: f64 = start.parse().map_err(|_| syntax(line, format!("bad start {start:?}")))?;
    let duration: f64 = duration.parse().map_err(|_| syntax(line, format!("bad duration {duration:?}")))?;
    let instrument: Instrument = instrument
        .parse()
        .map_err(|_| syntax(line, format!("unknown instrument {instrument:?}")))?;
    let intensity = intensity
        .strip_prefix('p')
        .and_then(|k| k.parse::<u8>().ok())
        .filter(|k| (1..=9).contains(k))
        .ok_or_else(|| syntax(line, format!("bad intensity {intensity:?}")))?;
    if index == 0 {
        return Err(syntax(line, "chord-note indices start at 1"));
    }
    if !(start >= 0.0 && start < cycle as f64) {
        return Err(syntax(line, format!("start {start} outside the {cycle}-beat cycle")));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(syntax(line, format!("duration {duration} must be positive")));
    }
    Ok(PatternNote {
        index,
        start,
        duration,
        instrument,
        intensity,
    })
}

fn parse_header(line: usize, text: &str) -> Result<(PatternId, usize)> {
    let mut parts = text.split_whitespace();
    let name = parts.next().ok_or_else(|| syntax(line, "empty header"))?;
    let id: PatternId = name.parse().map_err(|_| syntax(line, format!("unknown pattern {name:?}")))?;
    let mut cycle = DEFAULT_CYCLE_BEATS;
    for opt in parts {
        match opt.split_once('=') {
            Some(("beats", v)) => {
                cycle = v
                    .parse()
                    .ok()
                    .filter(|&c| c > 0)
                    .ok_or_else(|| syntax(line, format!("bad cycle length {v:?}")))?;
            }
            _ => return Err(syntax(line, format!("unknown header option {opt:?}"))),
        }
    }
    Ok((id, cycle))
}

impl PatternLibrary {
    pub fn parse(text: &str) -> Result<Self> {
        let mut slots: Vec<Option<TexturePattern>> = vec![None; PatternId::ALL.len()];
        let mut current: Option<TexturePattern> = None;
        let flush = |p: Option<TexturePattern>, slots: &mut Vec<Option<TexturePattern>>| {
            if let Some(p) = p {
                let id = p.id as usize;
                slots[id] = Some(p);
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let text = raw.split('#').next().unwrap().trim();
            if text.is_empty() {
                continue;
            }
            if let Some(header) = text.strip_prefix('[') {
                let header = header.strip_suffix(']').ok_or_else(|| syntax(line, "unterminated header"))?;
                let (id, cycle_beats) = parse_header(line, header)?;
                if slots[id as usize].is_some() || current.as_ref().is_some_and(|p| p.id == id) {
                    return Err(syntax(line, format!("pattern {id} defined twice")));
                }
                flush(current.take(), &mut slots);
                current = Some(TexturePattern {
                    id,
                    cycle_beats,
                    notes: Vec::new(),
                });
                continue;
            }
            let pattern = current.as_mut().ok_or_else(|| syntax(line, "note before any pattern header"))?;
            pattern.notes.push(parse_note(line, text, pattern.cycle_beats)?);
        }
        flush(current, &mut slots);
        let mut patterns = Vec::with_capacity(slots.len());
        for (id, slot) in PatternId::ALL.into_iter().zip(slots) {
            let p = slot.ok_or_else(|| syntax(0, format!("pattern {id} missing")))?;
            if p.notes.is_empty() {
                return Err(syntax(0, format!("pattern {id} has no notes")));
            }
            patterns.push(p);
        }
        Ok(PatternLibrary { patterns })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?)
    }

    pub fn standard() -> &'static PatternLibrary {
        static LIB: OnceLock<PatternLibrary> = OnceLock::new();
        LIB.get_or_init(|| {
            PatternLibrary::parse(include_str!("../../data/patterns.txt")).expect("bundled pattern library is valid")
        })
    }

    pub fn get(&self, id: PatternId) -> &TexturePattern {
        &self.patterns[id as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> TexturePattern {
        let note = |index, start, intensity| PatternNote {
            index,
            start,
            duration: 1.0,
            instrument: Instrument::Piano,
            intensity,
        };
        TexturePattern {
            id: PatternId::VersePiano1,
            cycle_beats: 4,
            notes: vec![note(1, 0.0, 5), note(2, 1.0, 7), note(3, 2.0, 7), note(2, 3.0, 7)],
        }
    }

    #[test]
    fn bundled_library_parses() {
        let lib = PatternLibrary::standard();
        for id in PatternId::ALL {
            assert_eq!(lib.get(id).id, id);
        }
    }

    #[test]
    fn broken_chord_example() {
        let c = Chord::new(vec![60, 64, 67]).unwrap();
        let ev = render(&example(), &c, 0, TimeSignature::FOUR_FOUR);
        let got: Vec<(u8, f64, Instrument, u8)> = ev.iter().map(|e| (e.pitch, e.onset, e.instrument, e.intensity)).collect();
        assert_eq!(
            got,
            [
                (60, 0.0, Instrument::Piano, 5),
                (64, 1.0, Instrument::Piano, 7),
                (67, 2.0, Instrument::Piano, 7),
                (64, 3.0, Instrument::Piano, 7),
                (60, 0.0, Instrument::Cello, 5),
            ]
        );
    }

    #[test]
    fn index_wraps_with_octave() {
        let cg = Chord::new(vec![60, 67]).unwrap();
        let ev = render(&example(), &cg, 0, TimeSignature::FOUR_FOUR);
        assert_eq!(ev[2].pitch, 72);
        assert_eq!(resolve_index(&cg, 3) % 12, 0);
    }

    #[test]
    fn bar_offset_translates() {
        let c = Chord::new(vec![60, 64, 67]).unwrap();
        let ev = render(&example(), &c, 4, TimeSignature::FOUR_FOUR);
        assert_eq!(ev[0].onset, 16.0);
        let ev = render(&example(), &c, 4, TimeSignature::TWO_FOUR);
        assert_eq!(ev[0].onset, 8.0);
    }

    #[test]
    fn velocities() {
        assert_eq!(velocity(1), 15);
        assert_eq!(velocity(5), 71);
        assert_eq!(velocity(9), 127);
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let err = PatternLibrary::parse("[VersePiano1]\n1,0,1,Kazoo,p5\n").unwrap_err();
        assert!(matches!(err, Error::PatternSyntax { line: 2, .. }));
        assert!(PatternLibrary::parse("1,0,1,Piano,p5\n").is_err());
        assert!(PatternLibrary::parse("[VersePiano1]\n1,5,1,Piano,p5\n").is_err());
        assert!(PatternLibrary::parse("[VersePiano1]\n1,0,1,Piano,p10\n").is_err());
    }
}
