//! Streaming orchestration: clocked melody ingestion, arrangement into the
//! cache, frontier prediction, texture rendering and latency accounting.
//!
//! The two phases share nothing but the append-only [`ChordCache`] and
//! message queues. Playback output never flows back into either phase.
//!
//! [`ChordCache`]: crate::arranger::ChordCache

mod clock;
mod connection;
mod session;
mod wire;

pub use clock::{Clock, ClockMode};
pub use connection::{Connection, MAX_BPM};
pub use session::{run_stream, Engines, Scheduler, Session, SessionConfig};
pub use wire::{AccompOut, ClientMessage, LatencyReport, LatencySummary, StreamEvent, WireNote, DEFAULT_BPM};
