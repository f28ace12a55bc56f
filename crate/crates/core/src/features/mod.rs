//! Melody and chord feature extractors.

mod cadence;
mod factor;
mod tracker;
mod weighted;

pub use cadence::{harmonic_steps, is_terminal, structural_chord_flag, terminal_chord_flags, HarmonicStep};
pub use factor::{
    choose_factor, splice_segments, tonic_entry, Nearest, SpliceResult, SpliceStep, WEIGHTED_NOTE_WEIGHT,
};
pub use tracker::{
    annotate_score, BeatAnnotation, BeatFeatures, ChordFlagTracker, ChordFlags, FeatureConfig, FeatureTracker,
    WINDOW_BEATS,
};
pub use weighted::{long_note_index, segment_notes, weighted_notes, NoteDescriptor, SYNCOPATION_STEPS};
