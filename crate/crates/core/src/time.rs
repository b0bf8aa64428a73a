//! Simulated time. Everything is integer milliseconds on a fixed 5 ms tick.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Length of one simulation tick in milliseconds.
pub const TICK_MS: u64 = 5;
/// Ticks per simulated second.
pub const TICKS_PER_SECOND: u64 = 1000 / TICK_MS;

/// Instant on the simulated clock, in milliseconds since genesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

/// Span of simulated time in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimDuration(pub u64);

impl SimTime {
    pub const fn from_ticks(ticks: u64) -> Self {
        SimTime(ticks * TICK_MS)
    }

    pub const fn ticks(self) -> u64 {
        self.0 / TICK_MS
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_since(self, earlier: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(earlier.0))
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_secs(secs: u64) -> Self {
        SimDuration(secs * 1000)
    }

    pub const fn from_ticks(ticks: u64) -> Self {
        SimDuration(ticks * TICK_MS)
    }

    pub const fn ticks(self) -> u64 {
        self.0 / TICK_MS
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Rounds a seconds value to the nearest whole tick.
    pub fn from_secs_f64_quantized(secs: f64) -> Self {
        SimDuration::from_ticks(secs_to_ticks(secs))
    }

    pub fn saturating_mul(self, factor: u64) -> Self {
        SimDuration(self.0.saturating_mul(factor))
    }
}

/// Nearest tick count for a non-negative seconds value.
pub fn secs_to_ticks(secs: f64) -> u64 {
    (secs * TICKS_PER_SECOND as f64).round().max(0.0) as u64
}

/// Exact seconds value of a tick count.
pub fn ticks_to_secs(ticks: u64) -> f64 {
    ticks as f64 / TICKS_PER_SECOND as f64
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimDuration;

    fn sub(self, rhs: SimTime) -> SimDuration {
        SimDuration(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} s", self.as_secs_f64())
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(1000) {
            write!(f, "{} s", self.0 / 1000)
        } else {
            write!(f, "{:.3} s", self.as_secs_f64())
        }
    }
}
