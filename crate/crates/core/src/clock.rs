//! Per-iteration time sources.

use std::time::Instant;

pub trait Clock {
    /// Starts a new iteration.
    fn reset(&mut self);
    /// Time used in the current iteration.
    fn now(&self) -> f64;
    /// Records the modeled cost of one engine call or training step.
    fn charge(&mut self, cost: f64);
}

/// Deterministic clock advanced only by charged costs.
#[derive(Debug, Default, Clone)]
pub struct VirtualClock {
    now: f64,
}

impl Clock for VirtualClock {
    fn reset(&mut self) {
        self.now = 0.0;
    }

    fn now(&self) -> f64 {
        self.now
    }

    fn charge(&mut self, cost: f64) {
        self.now += cost;
    }
}

/// Monotonic real time in seconds; charges are ignored.
#[derive(Debug, Clone)]
pub struct WallClock {
    start: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        WallClock {
            start: Instant::now(),
        }
    }
}

impl Clock for WallClock {
    fn reset(&mut self) {
        self.start = Instant::now();
    }

    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn charge(&mut self, _cost: f64) {}
}
