use serde::Serialize;

use crate::geometry::Vec3;
use crate::time::ticks_to_secs;

/// Constant-velocity motion anchored at the last velocity change, so the
/// position at any tick is `anchor + v * elapsed` with no accumulated error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MotionState {
    anchor: Vec3,
    anchor_tick: u64,
    velocity: Vec3,
}

impl MotionState {
    pub fn new(position: Vec3, velocity: Vec3, tick: u64) -> Self {
        MotionState {
            anchor: position,
            anchor_tick: tick,
            velocity,
        }
    }

    pub fn position_at(&self, tick: u64) -> Vec3 {
        let elapsed = ticks_to_secs(tick.saturating_sub(self.anchor_tick));
        self.anchor + self.velocity * elapsed
    }

    pub fn velocity(&self) -> Vec3 {
        self.velocity
    }

    /// Replaces the velocity from `tick` onward.
    pub fn set_velocity(&mut self, tick: u64, velocity: Vec3) {
        self.anchor = self.position_at(tick);
        self.anchor_tick = tick;
        self.velocity = velocity;
    }
}
