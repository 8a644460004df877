//! Discrete-event scheduling over integer nanoseconds.
//!
//! Events are dispatched in `(fire_at, sequence)` order, where `sequence` is
//! a counter assigned at scheduling time, so ties resolve FIFO. Handlers get
//! mutable access to the scheduler and may enqueue further events, including
//! events at the current instant.

mod rng;

use alloc::collections::{BTreeSet, BinaryHeap};
use core::cmp::Ordering;
use core::fmt;

pub use rng::{stream_id_for, BadProbability, RngStream};
pub(crate) use rng::check_probability;

/// Simulated time in nanoseconds since the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    /// Rounds to the nearest nanosecond; negative or NaN inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if !(secs > 0.0) {
            return SimTime::ZERO;
        }
        SimTime(libm::round(secs * 1e9) as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub const fn after(self, ns: u64) -> Self {
        SimTime(self.0 + ns)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Attempt `index` of a source firing at `frequency_hz`, floored to the
/// nanosecond. Attempt 0 is at t = 0.
pub fn attempt_time(index: u64, frequency_hz: f64) -> SimTime {
    let period_fs = libm::round(1e15 / frequency_hz) as u128;
    SimTime::from_nanos(((index as u128 * period_fs) / 1_000_000) as u64)
}

/// Number of attempts a source at `frequency_hz` makes during `duration`:
/// `floor(duration * f)`, evaluated in integer arithmetic.
pub fn attempts_in(duration: SimTime, frequency_hz: f64) -> u64 {
    let f_mhz = libm::round(frequency_hz * 1e3) as u128; // mHz
    ((duration.as_nanos() as u128 * f_mhz) / 1_000_000_000_000) as u64
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("cannot schedule at {fire_at}: simulated time is already {now}")]
    PastTime { fire_at: SimTime, now: SimTime },
}

/// Handle returned by [`Scheduler::schedule`]; allows cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

/// An event popped from the queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduled<E> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub action: E,
}

struct Entry<E>(Scheduled<E>);

impl<E> Entry<E> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_at, self.0.sequence)
    }
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest key pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Single-threaded event queue with a simulated clock.
pub struct Scheduler<E> {
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Entry<E>>,
    cancelled: BTreeSet<u64>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            cancelled: BTreeSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Events still waiting, including cancelled ones not yet drained.
    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, action: E) -> Result<EventHandle, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::PastTime {
                fire_at,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Entry(Scheduled {
            fire_at,
            sequence,
            action,
        }));
        Ok(EventHandle(sequence))
    }

    /// Schedules `delay_ns` after the current instant; never fails.
    pub fn schedule_in(&mut self, delay_ns: u64, action: E) -> EventHandle {
        let at = self.now.after(delay_ns);
        self.schedule(at, action)
            .expect("a non-negative delay is never in the past")
    }

    /// Returns `true` when the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.cancelled.contains(&handle.0) {
            return false;
        }
        let pending = self.queue.iter().any(|e| e.0.sequence == handle.0);
        if pending {
            self.cancelled.insert(handle.0);
        }
        pending
    }

    /// Removes the next live event with `fire_at <= t_end` and advances the
    /// clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Scheduled<E>> {
        loop {
            let head = self.queue.peek()?;
            if head.0.fire_at > t_end {
                return None;
            }
            let Entry(ev) = self.queue.pop()?;
            if !self.cancelled.is_empty() && self.cancelled.remove(&ev.sequence) {
                continue;
            }
            self.now = ev.fire_at;
            return Some(ev);
        }
    }

    /// Dispatches every event with `fire_at <= t_end` and leaves the clock at
    /// `t_end`. Returns the number of events dispatched.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> usize
    where
        F: FnMut(&mut Self, Scheduled<E>),
    {
        let mut dispatched = 0;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
            dispatched += 1;
        }
        if t_end > self.now {
            self.now = t_end;
        }
        dispatched
    }
}
