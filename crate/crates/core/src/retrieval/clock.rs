use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Time source for the request scheduler. Times are offsets from an
/// arbitrary per-clock origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

/// Wall clock; `sleep` blocks the thread.
#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Test clock: `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: Mutex<Duration>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        *self.now.lock().expect("clock poisoned") += by;
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock poisoned")
    }

    fn sleep(&self, duration: Duration) {
        self.advance(duration);
    }
}

/// Enforces a minimum spacing between the start times of successive calls.
#[derive(Debug, Clone)]
pub struct RateGate {
    interval: Duration,
    last_start: Option<Duration>,
}

impl RateGate {
    pub fn new(interval: Duration) -> Self {
        Self {
            interval,
            last_start: None,
        }
    }

    /// Block until the next call may start; returns its start time.
    pub fn wait(&mut self, clock: &dyn Clock) -> Duration {
        if let Some(last) = self.last_start {
            let elapsed = clock.now().saturating_sub(last);
            if elapsed < self.interval {
                clock.sleep(self.interval - elapsed);
            }
        }
        let start = clock.now();
        self.last_start = Some(start);
        start
    }
}
