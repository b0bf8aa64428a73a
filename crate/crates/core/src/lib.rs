//! Deterministic simulator of a UAV ad-hoc network whose data forwarding is
//! governed by an embedded contract state machine: registration deposits,
//! per-transaction guarantees, minimum-hop routing, ledgered hops, culprit
//! detection and escalating penalties.
//!
//! The contract layers ([`ledger`], [`registry`], [`transaction`]) are plain
//! deterministic state machines. [`engine`] drives them on a 5 ms tick and
//! [`gateway`] exposes scenarios, the CLI and the live control stream.

pub mod crypto;
pub mod engine;
pub mod gateway;
pub mod geometry;
pub mod ledger;
pub mod registry;
pub mod routing;
pub mod time;
pub mod transaction;

pub use geometry::Vec3;
pub use ledger::{Address, Ledger, TokenAmount};
pub use time::{SimDuration, SimTime};
