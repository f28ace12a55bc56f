use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::clock::{Clock, ClockMode};
use super::wire::{AccompOut, LatencyReport, LatencySummary, StreamEvent, WireNote, DEFAULT_BPM};
use crate::arranger::{ArrangementStream, Arranger, ChordCache, RuleArranger};
use crate::error::Result;
use crate::predictor::{EchoPredictor, PredictionWindow, Predictor};
use crate::score::STEPS_PER_BEAT;
use crate::texture::{PatternLibrary, TextureConfig, TextureEngine, TrackEvent};
use crate::{Chord, Pitch, TimeSignature, Tonality};

/// Where the arrangement phase runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheduler {
    /// Arrangement runs to completion before each prediction, on the
    /// caller's thread. Fully deterministic.
    Interleaved,
    /// Arrangement runs on its own thread; prediction waits for it at most
    /// [`SessionConfig::cache_wait`].
    Threaded,
}

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub bpm: f64,
    pub time_signature: TimeSignature,
    pub tonality: Tonality,
    pub clock: ClockMode,
    pub scheduler: Scheduler,
    pub texture: TextureConfig,
    pub cache_wait: Duration,
    /// When false no accompaniment is rendered or emitted.
    pub render: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            bpm: DEFAULT_BPM,
            time_signature: TimeSignature::FOUR_FOUR,
            tonality: Tonality::C_MAJOR,
            clock: ClockMode::Simulated,
            scheduler: Scheduler::Interleaved,
            texture: TextureConfig::default(),
            cache_wait: Duration::from_millis(100),
            render: true,
        }
    }
}

/// MIDI base of the bootstrap tonic triad.
const BOOTSTRAP_BASE: u8 = 48;

#[derive(Clone)]
pub struct Engines {
    pub arranger: Arc<dyn Arranger>,
    pub predictor: Arc<dyn Predictor>,
    pub patterns: Arc<PatternLibrary>,
}

impl Engines {
    /// Rule-based arranger, echo predictor and the bundled patterns.
    pub fn untrained(tonality: Tonality) -> Self {
        Engines {
            arranger: Arc::new(RuleArranger::default()),
            predictor: Arc::new(EchoPredictor { fallback: tonality.tonic_triad(BOOTSTRAP_BASE) }),
            patterns: Arc::new(PatternLibrary::standard().clone()),
        }
    }
}

type Job = (usize, Vec<Pitch>);
type Done = Result<(usize, Chord)>;

enum Stage {
    Inline { stream: ArrangementStream, arranger: Arc<dyn Arranger> },
    Worker { jobs: Option<Sender<Job>>, done: Receiver<Done>, handle: Option<JoinHandle<()>> },
}

fn arrangement_worker(
    mut stream: ArrangementStream,
    arranger: Arc<dyn Arranger>,
    cache: ChordCache,
    jobs: Receiver<Job>,
    done: Sender<Done>,
) {
    for (beat, samples) in jobs {
        let result = stream.step(&*arranger, &samples).and_then(|c| {
            cache.append(beat, c.clone())?;
            Ok((beat, c))
        });
        let failed = result.is_err();
        if done.send(result).is_err() || failed {
            break;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Idle,
    Running,
    Closed,
}

/// One accompaniment stream. Feed it melody samples in step order; every
/// call returns the events it caused, timestamped by the session clock.
///
/// Beat 0 is accompanied by the tonic triad and beat 1 by a prediction from
/// an empty window, both at start. When beat `c` completes, it is arranged
/// into the cache and the prediction for beat `c + 2` is emitted, while
/// beat `c + 1` is still sounding.
pub struct Session {
    config: SessionConfig,
    predictor: Arc<dyn Predictor>,
    clock: Clock,
    stage: Stage,
    cache: ChordCache,
    arranged: usize,
    melody: Vec<Pitch>,
    starved: Vec<bool>,
    texture: TextureEngine,
    rendered: Vec<TrackEvent>,
    last_prediction: Option<Chord>,
    latency: Vec<(usize, f64, u64)>,
    underruns: usize,
    stale_windows: usize,
    state: State,
}

impl Session {
    pub fn new(config: SessionConfig, engines: Engines) -> Self {
        let cache = ChordCache::new();
        let stream = ArrangementStream::new(config.time_signature, config.tonality, engines.arranger.feature_mask());
        let stage = match config.scheduler {
            Scheduler::Interleaved => Stage::Inline { stream, arranger: engines.arranger },
            Scheduler::Threaded => {
                let (jobs, job_rx) = mpsc::channel();
                let (done_tx, done) = mpsc::channel();
                let (arranger, c) = (engines.arranger, cache.clone());
                let handle = std::thread::Builder::new()
                    .name("arranger".into())
                    .spawn(move || arrangement_worker(stream, arranger, c, job_rx, done_tx))
                    .expect("spawn arranger thread");
                Stage::Worker { jobs: Some(jobs), done, handle: Some(handle) }
            }
        };
        Session {
            texture: TextureEngine::new(engines.patterns, config.time_signature, config.tonality, config.texture),
            clock: Clock::new(config.clock, config.bpm),
            predictor: engines.predictor,
            config,
            stage,
            cache,
            arranged: 0,
            melody: Vec::new(),
            starved: Vec::new(),
            rendered: Vec::new(),
            last_prediction: None,
            latency: Vec::new(),
            underruns: 0,
            stale_windows: 0,
            state: State::Idle,
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn cache(&self) -> &ChordCache {
        &self.cache
    }

    pub fn melody(&self) -> &[Pitch] {
        &self.melody
    }

    /// Every accompaniment note emitted so far.
    pub fn rendered(&self) -> &[TrackEvent] {
        &self.rendered
    }

    pub fn is_running(&self) -> bool {
        self.state == State::Running
    }

    pub fn is_closed(&self) -> bool {
        self.state == State::Closed
    }

    /// Step index of the next expected sample.
    pub fn next_step(&self) -> usize {
        self.melody.len()
    }

    /// Session time after which the next sample counts as missing: one step
    /// past its onset.
    pub fn next_deadline_us(&self) -> u64 {
        self.clock.step_onset_us(self.melody.len() + 1)
    }

    /// Under a realtime clock, sleeps until the onset of `step`.
    pub fn pace(&mut self, step: usize) {
        if self.config.clock == ClockMode::Realtime {
            let t = self.clock.step_onset_us(step);
            self.clock.wait_until(t);
        }
    }

    pub fn start(&mut self) -> Vec<StreamEvent> {
        let mut out = Vec::new();
        if self.state != State::Idle {
            self.error(&mut out, "session already started", false);
            return out;
        }
        self.clock.reset();
        self.state = State::Running;
        let t0 = Instant::now();
        let tonic = self.config.tonality.tonic_triad(BOOTSTRAP_BASE);
        self.accompany(&mut out, 0, tonic, false, t0);
        self.predict(&mut out, 1, &[], false);
        out
    }

    /// Accepts the sample of `step`. Steps skipped over are filled with
    /// rests and the beats they fall in count as starved.
    pub fn push(&mut self, step: usize, pitch: Pitch) -> Vec<StreamEvent> {
        let mut out = Vec::new();
        if !self.check_running(&mut out) {
            return out;
        }
        if step < self.melody.len() {
            self.error(&mut out, &format!("step {step} already received"), false);
            return out;
        }
        self.drain_arranged(&mut out);
        while self.melody.len() < step && self.is_running() {
            self.ingest(&mut out, Pitch::REST, true);
        }
        if self.is_running() {
            self.ingest(&mut out, pitch, false);
        }
        out
    }

    /// Marks every sample whose deadline has passed as missing. Only a
    /// realtime clock has deadlines.
    pub fn poll_deadline(&mut self) -> Vec<StreamEvent> {
        let mut out = Vec::new();
        if self.config.clock != ClockMode::Realtime || !self.is_running() {
            return out;
        }
        self.drain_arranged(&mut out);
        while self.is_running() && self.clock.now_us() >= self.next_deadline_us() {
            self.ingest(&mut out, Pitch::REST, true);
        }
        out
    }

    /// Ends the stream: waits for outstanding arrangement and emits the
    /// latency report.
    pub fn finish(&mut self) -> Vec<StreamEvent> {
        let mut out = Vec::new();
        if !self.check_running(&mut out) {
            return out;
        }
        let complete = self.melody.len() / STEPS_PER_BEAT;
        while self.arranged < complete && self.is_running() {
            self.await_arranged(&mut out, None);
        }
        if self.is_running() {
            self.close(&mut out);
        }
        out
    }

    fn check_running(&mut self, out: &mut Vec<StreamEvent>) -> bool {
        match self.state {
            State::Running => true,
            State::Idle => {
                self.error(out, "session not started", false);
                false
            }
            State::Closed => {
                self.error(out, "session closed", false);
                false
            }
        }
    }

    fn ingest(&mut self, out: &mut Vec<StreamEvent>, pitch: Pitch, missing: bool) {
        let step = self.melody.len();
        let beat = step / STEPS_PER_BEAT;
        self.clock.sync_to(self.clock.step_onset_us(step));
        self.melody.push(pitch);
        if step.is_multiple_of(STEPS_PER_BEAT) {
            self.starved.push(false);
        }
        self.starved[beat] |= missing;
        if !missing {
            out.push(StreamEvent::MelodyIn { step, beat, pitch, ts_us: self.clock.now_us() });
        }
        if step % STEPS_PER_BEAT == STEPS_PER_BEAT - 1 {
            self.beat_complete(out, beat);
        }
    }

    fn beat_complete(&mut self, out: &mut Vec<StreamEvent>, beat: usize) {
        let samples = self.melody[beat * STEPS_PER_BEAT..].to_vec();
        match &mut self.stage {
            Stage::Inline { stream, arranger } => {
                let result = stream.step(&**arranger, &samples).and_then(|c| {
                    self.cache.append(beat, c.clone())?;
                    Ok(c)
                });
                match result {
                    Ok(chord) => {
                        self.arranged += 1;
                        out.push(StreamEvent::ChordCached { beat, chord, ts_us: self.clock.now_us() });
                    }
                    Err(e) => return self.error(out, &format!("arranger failed on beat {beat}: {e}"), true),
                }
            }
            Stage::Worker { jobs, .. } => {
                let sent = jobs.as_ref().is_some_and(|j| j.send((beat, samples)).is_ok());
                if !sent {
                    // The worker has stopped; its error is waiting in the queue.
                    self.await_arranged(out, None);
                    if self.is_running() {
                        self.error(out, "arranger thread stopped", true);
                    }
                    return;
                }
                let deadline = Instant::now() + self.config.cache_wait;
                while self.arranged <= beat && self.is_running() {
                    if !self.await_arranged(out, Some(deadline)) {
                        break;
                    }
                }
            }
        }
        if !self.is_running() {
            return;
        }
        let query = beat + 2;
        if self.starved[beat] {
            self.underruns += 1;
            let held = self.last_prediction.clone().expect("bootstrap predicted beat 1");
            self.accompany(out, query, held, true, Instant::now());
            return;
        }
        let snapshot = self.cache.snapshot();
        let stale = snapshot.len() <= beat;
        self.predict(out, query, &snapshot, stale);
    }

    /// Emits the chord_cached events the worker has finished so far.
    fn drain_arranged(&mut self, out: &mut Vec<StreamEvent>) {
        loop {
            let next = match &self.stage {
                Stage::Worker { done, .. } => done.try_recv(),
                Stage::Inline { .. } => return,
            };
            match next {
                Ok(done) => self.arranged_result(out, done),
                Err(_) => return,
            }
            if !self.is_running() {
                return;
            }
        }
    }

    /// Waits for one arrangement result until `deadline` (forever if
    /// `None`). Returns false on timeout.
    fn await_arranged(&mut self, out: &mut Vec<StreamEvent>, deadline: Option<Instant>) -> bool {
        let Stage::Worker { done, .. } = &self.stage else {
            return true;
        };
        let next = match deadline {
            Some(d) => done.recv_timeout(d.saturating_duration_since(Instant::now())),
            None => done.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match next {
            Ok(done) => {
                self.arranged_result(out, done);
                true
            }
            Err(RecvTimeoutError::Timeout) => false,
            Err(RecvTimeoutError::Disconnected) => {
                self.error(out, "arranger thread stopped", true);
                true
            }
        }
    }

    fn arranged_result(&mut self, out: &mut Vec<StreamEvent>, done: Done) {
        match done {
            Ok((beat, chord)) => {
                self.arranged += 1;
                out.push(StreamEvent::ChordCached { beat, chord, ts_us: self.clock.now_us() });
            }
            Err(e) => self.error(out, &format!("arranger failed: {e}"), true),
        }
    }

    fn predict(&mut self, out: &mut Vec<StreamEvent>, query: usize, cache: &[Chord], stale: bool) {
        let t0 = Instant::now();
        let window = PredictionWindow::from_stream(cache, &self.melody, self.config.time_signature, query);
        let chord = match self.predictor.predict(&window) {
            Ok(c) => c,
            Err(e) => return self.error(out, &format!("predictor failed on beat {query}: {e}"), true),
        };
        self.stale_windows += stale as usize;
        out.push(StreamEvent::ChordPredicted { beat: query, chord: chord.clone(), stale, ts_us: self.clock.now_us() });
        self.accompany(out, query, chord, false, t0);
    }

    /// Renders and emits the accompaniment of `beat`; `t0` is when work on
    /// it began.
    fn accompany(&mut self, out: &mut Vec<StreamEvent>, beat: usize, chord: Chord, hold: bool, t0: Instant) {
        let mut tracks = Vec::new();
        if self.config.render {
            let render = self.texture.render_beat(beat, &chord, &self.melody);
            tracks = render.events.iter().map(WireNote::from).collect();
            self.rendered.extend(render.events);
        }
        let physical = t0.elapsed().as_micros() as u64;
        let emit_ts_us = self.clock.now_us();
        let logical = (emit_ts_us as f64 - self.clock.beat_onset_us(beat) as f64) / self.clock.beat_period_us();
        self.latency.push((beat, logical, physical));
        self.last_prediction = Some(chord.clone());
        if self.config.render {
            out.push(StreamEvent::AccompOut(AccompOut { beat, chord, tracks, emit_ts_us, hold }));
        }
    }

    fn error(&mut self, out: &mut Vec<StreamEvent>, message: &str, fatal: bool) {
        out.push(StreamEvent::Error { message: message.to_string(), fatal, ts_us: self.clock.now_us() });
        if fatal && self.state == State::Running {
            self.close(out);
        }
    }

    fn close(&mut self, out: &mut Vec<StreamEvent>) {
        self.state = State::Closed;
        self.stop_worker();
        out.push(StreamEvent::LatencyReport(self.report()));
    }

    pub fn report(&self) -> LatencyReport {
        let logical: Vec<f64> = self.latency.iter().map(|l| l.1).collect();
        let physical: Vec<u64> = self.latency.iter().map(|l| l.2).collect();
        let margins: Vec<f64> = logical.iter().map(|l| 0.0 - l).collect();
        let n = margins.len().max(1) as f64;
        LatencyReport {
            clock: self.config.clock,
            bpm: self.config.bpm,
            beats: self.latency.iter().map(|l| l.0).collect(),
            max_logical_latency_beats: logical.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_margin_beats: margins.iter().sum::<f64>() / n,
            min_margin_beats: margins.iter().copied().fold(f64::INFINITY, f64::min),
            logical_latency_beats: logical,
            physical: LatencySummary::of(&physical),
            physical_latency_us: physical,
            underruns: self.underruns,
            stale_windows: self.stale_windows,
        }
    }

    fn stop_worker(&mut self) {
        if let Stage::Worker { jobs, handle, .. } = &mut self.stage {
            jobs.take();
            if let Some(h) = handle.take() {
                let _ = h.join();
            }
        }
    }

    /// Receives samples from `source` until it closes, paced by a realtime
    /// clock: a sample that has not arrived one step after its onset is
    /// treated as missing. `sink` sees every event as it happens.
    pub fn drive(&mut self, source: Receiver<(usize, Pitch)>, mut sink: impl FnMut(&StreamEvent)) {
        let mut emit = |events: Vec<StreamEvent>| events.iter().for_each(&mut sink);
        if self.state == State::Idle {
            emit(self.start());
        }
        while self.is_running() {
            let next = if self.config.clock == ClockMode::Realtime {
                let deadline = self.clock.instant_of(self.next_deadline_us());
                source.recv_timeout(deadline.saturating_duration_since(Instant::now()))
            } else {
                source.recv().map_err(|_| RecvTimeoutError::Disconnected)
            };
            match next {
                Ok((step, pitch)) => emit(self.push(step, pitch)),
                Err(RecvTimeoutError::Timeout) => emit(self.poll_deadline()),
                Err(RecvTimeoutError::Disconnected) => emit(self.finish()),
            }
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.stop_worker();
    }
}

/// Runs a whole melody through a fresh session. A realtime clock delivers
/// each sample at its onset; a simulated one runs as fast as possible.
pub fn run_stream(config: SessionConfig, engines: Engines, melody: &[Pitch]) -> (Vec<StreamEvent>, Session) {
    let mut session = Session::new(config, engines);
    let mut events = session.start();
    for (step, &p) in melody.iter().enumerate() {
        if !session.is_running() {
            break;
        }
        session.pace(step);
        events.extend(session.push(step, p));
    }
    if session.is_running() {
        events.extend(session.finish());
    }
    (events, session)
}
