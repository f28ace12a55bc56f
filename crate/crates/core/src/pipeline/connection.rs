use std::time::Instant;

use super::clock::ClockMode;
use super::session::{Engines, Session, SessionConfig};
use super::wire::{ClientMessage, StreamEvent};

/// Upper tempo accepted from a client.
pub const MAX_BPM: f64 = 400.0;

/// Server side of one client connection, independent of the transport.
/// Each `start` opens a fresh session; malformed or out-of-order messages
/// get an error reply and leave the session running.
pub struct Connection {
    base: SessionConfig,
    engines: Engines,
    session: Option<Session>,
}

impl Connection {
    pub fn new(base: SessionConfig, engines: Engines) -> Self {
        Connection { base, engines, session: None }
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    /// Engines for sessions started from now on.
    pub fn engines_mut(&mut self) -> &mut Engines {
        &mut self.engines
    }

    pub fn handle_line(&mut self, line: &str) -> Vec<StreamEvent> {
        match ClientMessage::parse(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![self.error(e.to_string())],
        }
    }

    /// Events for the client; the echo of its own melody is left out.
    pub fn handle(&mut self, msg: ClientMessage) -> Vec<StreamEvent> {
        let events = match (msg, &mut self.session) {
            (ClientMessage::Start { bpm, tonality, time_signature }, s) => {
                if s.as_ref().is_some_and(Session::is_running) {
                    return vec![self.error("session already started".into())];
                }
                if !(bpm.is_finite() && bpm > 0.0 && bpm <= MAX_BPM) {
                    return vec![self.error(format!("bpm must lie in (0, {MAX_BPM}], got {bpm}"))];
                }
                let config = SessionConfig {
                    bpm,
                    tonality: tonality.unwrap_or(self.base.tonality),
                    time_signature: time_signature.unwrap_or(self.base.time_signature),
                    ..self.base.clone()
                };
                let session = s.insert(Session::new(config, self.engines.clone()));
                session.start()
            }
            (ClientMessage::MelodyIn { step, pitch }, Some(s)) => s.push(step, pitch),
            (ClientMessage::End, Some(s)) => s.finish(),
            (_, None) => return vec![self.error("send start first".into())],
        };
        client_facing(events)
    }

    /// Instant at which [`Connection::poll`] has work: the next sample
    /// deadline of a running realtime session.
    pub fn next_deadline(&self) -> Option<Instant> {
        let s = self.session.as_ref().filter(|s| s.is_running())?;
        (s.config().clock == ClockMode::Realtime).then(|| s.clock().instant_of(s.next_deadline_us()))
    }

    pub fn poll(&mut self) -> Vec<StreamEvent> {
        match &mut self.session {
            Some(s) => client_facing(s.poll_deadline()),
            None => Vec::new(),
        }
    }

    fn error(&self, message: String) -> StreamEvent {
        let ts_us = self.session.as_ref().map_or(0, |s| s.clock().now_us());
        StreamEvent::Error { message, fatal: false, ts_us }
    }
}

fn client_facing(events: Vec<StreamEvent>) -> Vec<StreamEvent> {
    events.into_iter().filter(|e| !matches!(e, StreamEvent::MelodyIn { .. })).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tonality;

    fn conn() -> Connection {
        Connection::new(SessionConfig::default(), Engines::untrained(Tonality::C_MAJOR))
    }

    fn kinds(events: &[StreamEvent]) -> Vec<&'static str> {
        events.iter().map(StreamEvent::kind).collect()
    }

    #[test]
    fn sixteen_samples_yield_accompaniment() {
        let mut c = conn();
        let mut events = c.handle_line(r#"{"type":"start","bpm":80}"#);
        for step in 0..16 {
            events.extend(c.handle_line(&format!(r#"{{"type":"melody_in","step":{step},"pitch":{}}}"#, 60 + step % 5)));
        }
        events.extend(c.handle_line(r#"{"type":"end"}"#));
        let k = kinds(&events);
        assert!(k.iter().filter(|&&x| x == "accomp_out").count() >= 4);
        assert_eq!(k.iter().filter(|&&x| x == "chord_cached").count(), 4);
        assert!(!k.contains(&"melody_in"));
        assert_eq!(k.last(), Some(&"latency_report"));
    }

    #[test]
    fn malformed_messages_keep_the_session() {
        let mut c = conn();
        assert_eq!(kinds(&c.handle_line(r#"{"type":"melody_in","step":0,"pitch":60}"#)), ["error"]);
        c.handle_line(r#"{"type":"start"}"#);
        assert_eq!(kinds(&c.handle_line("{oops")), ["error"]);
        assert_eq!(kinds(&c.handle_line(r#"{"type":"start","bpm":-3}"#)), ["error"]);
        assert_eq!(kinds(&c.handle_line(r#"{"type":"jump"}"#)), ["error"]);
        assert!(c.session().unwrap().is_running());
        assert!(c.handle_line(r#"{"type":"melody_in","step":0,"pitch":60}"#).is_empty());
    }

    #[test]
    fn start_after_end_opens_a_new_session() {
        let mut c = conn();
        c.handle_line(r#"{"type":"start"}"#);
        c.handle_line(r#"{"type":"end"}"#);
        assert!(c.session().unwrap().is_closed());
        let again = c.handle_line(r#"{"type":"start","bpm":120,"tonality":{"tonic":9,"mode":"minor"}}"#);
        assert_eq!(kinds(&again), ["accomp_out", "chord_predicted", "accomp_out"]);
        assert_eq!(c.session().unwrap().config().bpm, 120.0);
    }
}
