use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::time::secs_to_ticks;

/// Extra ticks of slack added to the timeout when jitter is enabled.
pub const JITTER_ALLOWANCE_TICKS: u64 = 3;

/// Per-hop transmission delay, quantized to ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TimingModel {
    pub per_hop_ticks: u64,
    pub jitter_ticks: u64,
}

impl TimingModel {
    pub fn from_secs(per_hop_s: f64, jitter_s: f64) -> Self {
        TimingModel {
            per_hop_ticks: secs_to_ticks(per_hop_s).max(1),
            jitter_ticks: secs_to_ticks(jitter_s),
        }
    }

    /// One hop's delay; uniform in `per_hop ± jitter`, never below one tick.
    pub fn sample_hop<R: Rng>(&self, rng: &mut R) -> u64 {
        if self.jitter_ticks == 0 {
            return self.per_hop_ticks;
        }
        let j = self.jitter_ticks as i64;
        let delta = rng.gen_range(-j..=j);
        (self.per_hop_ticks as i64 + delta).max(1) as u64
    }

    /// Ticks after the source starts at which the destination gives up.
    /// Without jitter this is exactly the expected arrival.
    pub fn timeout_after(&self, route_len: usize) -> u64 {
        let hops = route_len.saturating_sub(1) as u64;
        let allowance = if self.jitter_ticks == 0 {
            0
        } else {
            hops * self.jitter_ticks + JITTER_ALLOWANCE_TICKS
        };
        hops * self.per_hop_ticks + allowance
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionDomainError {
    #[error("route must have at least two nodes, got {0}")]
    RouteTooShort(usize),
    #[error("hops before drop must be in 0..={max}, got {got}")]
    HopsOutOfRange { got: usize, max: usize },
    #[error("per-hop delay must be positive and finite, got {0}")]
    BadDelay(f64),
}

/// Delay between a drop and its detection: `(n - 1 - x) * per_hop`, where `n`
/// is the route length and `x` the hops completed before the drop.
pub fn expected_detection_time(n: usize, x: usize, per_hop_s: f64) -> Result<f64, DetectionDomainError> {
    if n < 2 {
        return Err(DetectionDomainError::RouteTooShort(n));
    }
    if x > n - 2 {
        return Err(DetectionDomainError::HopsOutOfRange { got: x, max: n - 2 });
    }
    if !(per_hop_s.is_finite() && per_hop_s > 0.0) {
        return Err(DetectionDomainError::BadDelay(per_hop_s));
    }
    Ok((n - 1 - x) as f64 * per_hop_s)
}
