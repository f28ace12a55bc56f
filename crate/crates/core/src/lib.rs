//! Real-time melody accompaniment with zero logical latency.
//!
//! An arranging model labels each completed melody beat with a chord and
//! appends it to a cache that is never played. A linear-chain CRF then reads
//! only that cache plus the melody to predict the chord for the *next* beat,
//! which is rendered through texture patterns and emitted before the beat
//! starts. Because predictions never feed back into later windows, the
//! predictor cannot accumulate its own errors.

mod checkpoint;
pub mod arranger;
pub mod dataio;
pub mod error;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod score;
pub mod texture;

pub use error::{Error, Result};
pub use score::{Chord, ChordMap, Pitch, Score, TimeSignature, Tonality};
