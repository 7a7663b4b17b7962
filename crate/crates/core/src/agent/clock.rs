use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use super::trace::{Step, StepTimings};

/// Monotonic time source for step timings.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

/// Wall-clock time since construction.
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Virtual clock that advances by a fixed tick on every reading, so that
/// timings depend only on the sequence of measured steps.
pub struct TickClock {
    tick_us: u64,
    readings: AtomicU64,
}

impl TickClock {
    pub fn new(tick: Duration) -> Self {
        TickClock {
            tick_us: tick.as_micros() as u64,
            readings: AtomicU64::new(0),
        }
    }
}

impl Clock for TickClock {
    fn now(&self) -> Duration {
        let n = self.readings.fetch_add(1, Ordering::SeqCst) + 1;
        Duration::from_micros(n * self.tick_us)
    }
}

/// Contiguous lap timer: each split charges the time since the previous
/// mark to one step, so the step durations add up to the total.
pub(crate) struct Lap<'a> {
    clock: &'a dyn Clock,
    start: Duration,
    mark: Duration,
    pub(crate) timings: StepTimings,
}

impl<'a> Lap<'a> {
    pub(crate) fn start(clock: &'a dyn Clock) -> Self {
        let now = clock.now();
        Lap {
            clock,
            start: now,
            mark: now,
            timings: StepTimings::default(),
        }
    }

    /// Charges the elapsed lap to `step`; returns it in milliseconds.
    pub(crate) fn split(&mut self, step: Step) -> f64 {
        let now = self.clock.now();
        let ms = (now - self.mark).as_secs_f64() * 1000.0;
        self.mark = now;
        self.timings.add(step, ms);
        self.timings.total_ms = (now - self.start).as_secs_f64() * 1000.0;
        ms
    }
}
