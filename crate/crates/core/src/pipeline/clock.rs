use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

use crate::score::STEPS_PER_BEAT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClockMode {
    /// Time moves only when the stream says so; runs are reproducible.
    #[serde(rename = "sim")]
    Simulated,
    /// Wall-clock time since the session started.
    #[serde(rename = "rt")]
    Realtime,
}

/// Session time in microseconds. Never moves backwards.
#[derive(Clone, Debug)]
pub struct Clock {
    mode: ClockMode,
    bpm: f64,
    origin: Instant,
    sim_now: u64,
}

impl Clock {
    pub fn new(mode: ClockMode, bpm: f64) -> Self {
        Clock { mode, bpm, origin: Instant::now(), sim_now: 0 }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn bpm(&self) -> f64 {
        self.bpm
    }

    /// Restarts the session at time zero.
    pub fn reset(&mut self) {
        self.origin = Instant::now();
        self.sim_now = 0;
    }

    pub fn step_period_us(&self) -> f64 {
        60e6 / (STEPS_PER_BEAT as f64 * self.bpm)
    }

    pub fn beat_period_us(&self) -> f64 {
        60e6 / self.bpm
    }

    pub fn step_onset_us(&self, step: usize) -> u64 {
        (step as f64 * self.step_period_us()).round() as u64
    }

    pub fn beat_onset_us(&self, beat: usize) -> u64 {
        self.step_onset_us(beat * STEPS_PER_BEAT)
    }

    pub fn now_us(&self) -> u64 {
        match self.mode {
            ClockMode::Simulated => self.sim_now,
            ClockMode::Realtime => self.origin.elapsed().as_micros() as u64,
        }
    }

    /// Simulated: jumps to `t` unless already past it. Realtime: no effect,
    /// wall time moves on its own.
    pub fn sync_to(&mut self, t: u64) {
        if self.mode == ClockMode::Simulated {
            self.sim_now = self.sim_now.max(t);
        }
    }

    /// Like [`Clock::sync_to`], but a realtime clock sleeps until `t`.
    pub fn wait_until(&mut self, t: u64) {
        match self.mode {
            ClockMode::Simulated => self.sync_to(t),
            ClockMode::Realtime => {
                let target = self.instant_of(t);
                let now = Instant::now();
                if target > now {
                    std::thread::sleep(target - now);
                }
            }
        }
    }

    /// Wall-clock instant of session time `t`.
    pub fn instant_of(&self, t: u64) -> Instant {
        self.origin + Duration::from_micros(t)
    }
}
