use crate::score::{classify_degree, Chord, Degree, ScaleDegree, Tonality};

/// What the cadence detector needs to know about one chord.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HarmonicStep {
    pub degree: Option<ScaleDegree>,
    /// The chord carries a minor or major seventh above its root.
    pub seventh: bool,
}

impl HarmonicStep {
    pub fn of(chord: &Chord, tonality: Tonality) -> Self {
        let root = chord.root();
        let seventh = chord.contains_class((root + 10) % 12) || chord.contains_class((root + 11) % 12);
        HarmonicStep {
            degree: classify_degree(chord, tonality),
            seventh,
        }
    }

    fn is(&self, d: Degree) -> bool {
        self.degree.map(|s| s.degree) == Some(d)
    }
}

pub fn harmonic_steps(chords: &[Chord], tonality: Tonality) -> Vec<HarmonicStep> {
    chords.iter().map(|c| HarmonicStep::of(c, tonality)).collect()
}

/// True when `cur`, preceded by `prev`, completes a cadence: V-I, IV-I,
/// V7-VI, or a move from any other chord onto V or VII.
pub fn is_terminal(prev: &HarmonicStep, cur: &HarmonicStep) -> bool {
    use Degree::*;
    let Some(cur_degree) = cur.degree.map(|d| d.degree) else {
        return false;
    };
    let perfect = prev.is(V) && cur_degree == I;
    let plagal = prev.is(IV) && cur_degree == I;
    let interrupted = prev.is(V) && prev.seventh && cur_degree == VI;
    let imperfect = matches!(cur_degree, V | VII) && !prev.is(cur_degree);
    perfect || plagal || interrupted || imperfect
}

/// Terminal flag per position; position 0 has no predecessor and is never set.
pub fn terminal_chord_flags(steps: &[HarmonicStep]) -> Vec<bool> {
    let mut out = vec![false; steps.len()];
    for i in 1..steps.len() {
        out[i] = is_terminal(&steps[i - 1], &steps[i]);
    }
    out
}

/// Root-position I, II, IV or V chord that exists in the ChordMap.
pub fn structural_chord_flag(chord: &Chord, tonality: Tonality) -> bool {
    use Degree::*;
    match classify_degree(chord, tonality) {
        Some(ScaleDegree { degree, inverted: false }) => matches!(degree, I | II | IV | V),
        _ => false,
    }
}
