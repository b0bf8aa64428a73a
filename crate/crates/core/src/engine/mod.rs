//! Discrete-time driver for the contracts.
//!
//! The engine owns all mutable state. Commands are applied only at tick
//! boundaries, in submission order; readers get immutable [`Snapshot`]s.
//! Per tick: scripted actions and queued commands, then a due hop forward,
//! then the destination's timeout check.

pub mod behavior;
pub mod command;
pub mod metrics;
pub mod motion;
pub mod snapshot;
pub mod timing;
pub mod trace;

use std::collections::VecDeque;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::{self, Ciphertext, KeyPair, Scheme};
use crate::gateway::scenario::{validate_command_values, ScenarioConfig, ScenarioError};
use crate::geometry::Vec3;
use crate::ledger::{Address, Ledger, LedgerError, TokenAmount};
use crate::registry::{Registry, RegistryError, RegistryParams};
use crate::routing;
use crate::time::{secs_to_ticks, SimTime};
use crate::transaction::{
    DataSending, FailureReason, Outcome, Phase, Settlement, TransactionError, TransactionParams,
};

pub use behavior::Behavior;
pub use command::{Command, NodeRef, NodeSpec};
pub use metrics::{MetricsReport, TokenAudit, TransactionMetric};
pub use motion::MotionState;
pub use snapshot::{ColorCode, Link, LinkStyle, NodeView, Snapshot, TransactionView};
pub use timing::{expected_detection_time, TimingModel};
pub use trace::TraceRecord;

use behavior::{apply_tamper, Action};

/// First channel id; node `i` (0-based, scenario order) uses `BASE_CHANNEL_ID + i`.
pub const BASE_CHANNEL_ID: u32 = 8000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error(transparent)]
    Transaction(#[from] TransactionError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Clone, Debug)]
pub struct SimNode {
    pub name: String,
    pub address: Address,
    pub keys: KeyPair,
    pub is_gcs: bool,
    pub motion: MotionState,
    pub behavior: Behavior,
    pub channel_id: u32,
}

/// Data in flight for the open transaction.
#[derive(Clone, Debug)]
struct Pipeline {
    route: Vec<Address>,
    in_flight: Ciphertext,
    /// Route position currently holding the data.
    holder: usize,
    next_fire: Option<u64>,
    timeout_at: u64,
    opened_tick: u64,
}

/// Result of a headless run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub metrics: MetricsReport,
}

pub struct Engine {
    config: ScenarioConfig,
    timing: TimingModel,
    scheme: Scheme,
    tick: u64,
    ledger: Ledger,
    registry: Registry,
    contract: DataSending,
    nodes: Vec<SimNode>,
    rng: ChaCha8Rng,
    scripted: Vec<(u64, Command)>,
    next_scripted: usize,
    queue: VecDeque<Command>,
    pipeline: Option<Pipeline>,
    trace: Vec<TraceRecord>,
    snapshot_cursor: usize,
    metrics: Vec<TransactionMetric>,
    links: Vec<Link>,
    success_node: Option<Address>,
    paused: bool,
    speed: f64,
}

impl Engine {
    pub fn new(config: ScenarioConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let registry = Registry::new(RegistryParams {
            registration_fee: TokenAmount::from_milli(config.registration_fee_meth),
            ..RegistryParams::default()
        });
        let contract = DataSending::new(TransactionParams {
            guarantee: TokenAmount::from_milli(config.guarantee_meth),
        });
        let scripted = config
            .actions
            .iter()
            .map(|a| (secs_to_ticks(a.at_s), a.action.clone()))
            .collect();
        let mut engine = Engine {
            timing: TimingModel::from_secs(config.per_hop_delay_s, config.jitter_s),
            scheme: config.cipher,
            tick: 0,
            ledger: Ledger::new(),
            registry,
            contract,
            nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            scripted,
            next_scripted: 0,
            queue: VecDeque::new(),
            pipeline: None,
            trace: Vec::new(),
            snapshot_cursor: 0,
            metrics: Vec::new(),
            links: Vec::new(),
            success_node: None,
            paused: false,
            speed: 1.0,
            config,
        };
        for spec in engine.config.nodes.clone() {
            // Genesis refusals are recorded in the trace; the node stays visible.
            let _ = engine.register_node(&spec);
        }
        engine.run_scripted();
        Ok(engine)
    }

    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        Engine::new(crate::gateway::scenario::load_scenario(text)?)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn now(&self) -> SimTime {
        SimTime::from_ticks(self.tick)
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn contract(&self) -> &DataSending {
        &self.contract
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn timing(&self) -> TimingModel {
        self.timing
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// True when no transaction is in flight.
    pub fn is_idle(&self) -> bool {
        self.pipeline.is_none() && self.contract.active().is_none()
    }

    pub fn node(&self, node: &str) -> Result<&SimNode, EngineError> {
        Ok(&self.nodes[self.resolve(node)?])
    }

    pub fn address_of(&self, node: &str) -> Result<Address, EngineError> {
        Ok(self.node(node)?.address)
    }

    /// Resolves a node name, `0x` address or channel id.
    pub fn resolve(&self, node: &str) -> Result<usize, EngineError> {
        if let Some(i) = self.nodes.iter().position(|n| n.name == node) {
            return Ok(i);
        }
        if let Ok(address) = node.parse::<Address>() {
            if let Some(i) = self.nodes.iter().position(|n| n.address == address) {
                return Ok(i);
            }
        }
        if let Ok(channel) = node.parse::<u32>() {
            if let Some(i) = self.nodes.iter().position(|n| n.channel_id == channel) {
                return Ok(i);
            }
        }
        Err(EngineError::UnknownNode(node.to_owned()))
    }

    /// Checks a command against the current state without applying it.
    pub fn validate(&self, command: &Command) -> Result<(), EngineError> {
        validate_command_values(command).map_err(EngineError::InvalidCommand)?;
        for node in command.node_refs() {
            self.resolve(node)?;
        }
        Ok(())
    }

    /// Queues a command for the next tick boundary.
    pub fn submit(&mut self, command: Command) -> Result<(), EngineError> {
        self.validate(&command)?;
        self.queue.push_back(command);
        Ok(())
    }

    /// Applies a command now. Call only between ticks.
    pub fn apply(&mut self, command: Command) -> Result<(), EngineError> {
        let result = self.apply_inner(&command);
        if let Err(e) = &result {
            self.emit(
                "command_rejected",
                json!({ "command": command, "reason": e.to_string() }),
            );
        }
        result
    }

    fn apply_inner(&mut self, command: &Command) -> Result<(), EngineError> {
        self.validate(command)?;
        match command {
            Command::SetVelocity { node, vx, vy, vz } => self.set_velocity(node, Vec3::new(*vx, *vy, *vz)),
            Command::StartTransaction { source, dest, plaintext } => {
                self.start_transaction(source, dest, plaintext.as_bytes())
            }
            Command::InjectBehavior { node, behavior } => self.inject_behavior(node, *behavior),
            Command::PayPenalty { node } => self.pay_penalty(node),
            Command::Abort { gcs } => self.abort(gcs),
            Command::RegisterNode { spec } => self.register_node(spec),
            Command::Pause {} => {
                self.paused = true;
                Ok(())
            }
            Command::Resume {} => {
                self.paused = false;
                Ok(())
            }
            Command::SetSpeed { multiplier } => {
                self.speed = *multiplier;
                Ok(())
            }
        }
    }

    pub fn set_velocity(&mut self, node: &str, velocity: Vec3) -> Result<(), EngineError> {
        if !velocity.is_finite() {
            return Err(EngineError::InvalidCommand("velocity components must be finite".into()));
        }
        let i = self.resolve(node)?;
        let tick = self.tick;
        self.nodes[i].motion.set_velocity(tick, velocity);
        let address = self.nodes[i].address;
        self.emit(
            "velocity_set",
            json!({ "node": address, "velocity": [velocity.x, velocity.y, velocity.z] }),
        );
        Ok(())
    }

    pub fn inject_behavior(&mut self, node: &str, behavior: Behavior) -> Result<(), EngineError> {
        behavior.validate().map_err(EngineError::InvalidCommand)?;
        let i = self.resolve(node)?;
        self.nodes[i].behavior = behavior;
        let address = self.nodes[i].address;
        self.emit("behavior_injected", json!({ "node": address, "behavior": behavior }));
        Ok(())
    }

    pub fn pay_penalty(&mut self, node: &str) -> Result<(), EngineError> {
        let address = self.address_of(node)?;
        let amount = self.registry.record(&address)?.penalty_token;
        let now = self.now();
        match self.registry.pay_penalty(&mut self.ledger, address, amount, now) {
            Ok(()) => {
                self.emit("penalty_paid", json!({ "node": address, "amount_meth": amount }));
                Ok(())
            }
            Err(e) => {
                if let RegistryError::WindowLapsed { penalty_token, fault_time } = &e {
                    self.emit(
                        "penalty_window_lapsed",
                        json!({
                            "node": address,
                            "penalty_token_meth": penalty_token,
                            "fault_time_s": fault_time.0 / 1000,
                            "blacklist_count": self.registry.blacklist_count(&address),
                        }),
                    );
                }
                Err(e.into())
            }
        }
    }

    pub fn abort(&mut self, gcs: &str) -> Result<(), EngineError> {
        let address = self.address_of(gcs)?;
        let opened = self.pipeline.as_ref().map(|p| p.opened_tick);
        let report = self.contract.abort(&mut self.ledger, &mut self.registry, address)?;
        self.pipeline = None;
        if report.voided_transaction {
            self.record_closed(opened.unwrap_or(self.tick), "aborted", None, None, None);
        }
        self.emit(
            "abort",
            json!({ "gcs": address, "voided_transaction": report.voided_transaction, "refunded": report.refunded, "removed": report.removed }),
        );
        Ok(())
    }

    /// Registers a scenario node, or re-registers an existing identity.
    /// Same key material means same address.
    pub fn register_node(&mut self, spec: &NodeSpec) -> Result<(), EngineError> {
        spec.behavior.validate().map_err(EngineError::InvalidCommand)?;
        let keys = self.scheme.keygen(self.key_seed(spec));
        let address = Address::from_key_material(&keys.public_key.0);
        let index = match self.nodes.iter().position(|n| n.address == address) {
            Some(i) => i,
            None => {
                if self.nodes.iter().any(|n| n.name == spec.name) {
                    return Err(EngineError::InvalidCommand(format!("node name `{}` is taken", spec.name)));
                }
                self.nodes.push(SimNode {
                    name: spec.name.clone(),
                    address,
                    keys: keys.clone(),
                    is_gcs: spec.is_gcs,
                    motion: MotionState::new(spec.position.into(), spec.velocity.into(), self.tick),
                    behavior: spec.behavior,
                    channel_id: BASE_CHANNEL_ID + self.nodes.len() as u32,
                });
                self.nodes.len() - 1
            }
        };
        if !self.ledger.contains(&address) {
            self.ledger
                .open_account(address, TokenAmount::from_milli(self.config.genesis_balance_meth))?;
        }
        let fee = self.registry.params().registration_fee;
        let now = self.now();
        match self
            .registry
            .register(&mut self.ledger, address, keys.public_key, spec.is_gcs, fee, now)
        {
            Ok(()) => {
                let node = &mut self.nodes[index];
                node.is_gcs = spec.is_gcs;
                node.behavior = spec.behavior;
                node.motion = MotionState::new(spec.position.into(), spec.velocity.into(), self.tick);
                self.emit(
                    "node_registered",
                    json!({ "node": address, "name": self.nodes[index].name, "is_gcs": spec.is_gcs, "fee_meth": fee }),
                );
                Ok(())
            }
            Err(e) => {
                self.emit(
                    "registration_refused",
                    json!({ "node": address, "name": spec.name, "reason": e.to_string() }),
                );
                Err(e.into())
            }
        }
    }

    fn key_seed(&self, spec: &NodeSpec) -> [u8; 32] {
        match spec.key_seed {
            Some(seed) => crypto::seed_from_u64(seed),
            None => {
                let mut h = Sha256::new();
                h.update(b"uaanet/node-key");
                h.update(self.config.seed.to_be_bytes());
                h.update(spec.name.as_bytes());
                h.finalize().into()
            }
        }
    }

    /// Opens a transaction: every eligible node registers its current
    /// coordinates, then the route is fixed and the source starts sending.
    pub fn start_transaction(&mut self, source: &str, dest: &str, plaintext: &[u8]) -> Result<(), EngineError> {
        let src = self.address_of(source)?;
        let dst_index = self.resolve(dest)?;
        let dst = self.nodes[dst_index].address;
        let mut ephemeral = [0u8; 32];
        self.rng.fill_bytes(&mut ephemeral);
        let ciphertext = self
            .scheme
            .encrypt_with_seed(&self.nodes[dst_index].keys.public_key, plaintext, ephemeral);
        let now = self.now();
        self.contract
            .do_trans(&self.registry, src, dst, ciphertext.clone(), now)?;
        self.links.clear();
        self.success_node = None;
        self.emit(
            "tx_opened",
            json!({ "source": src, "destination": dst, "payload_digest": ciphertext.digest_hex(), "payload_len": ciphertext.len() }),
        );

        for i in 0..self.nodes.len() {
            let address = self.nodes[i].address;
            let eligible = self.registry.record(&address).is_ok_and(|r| !r.faulty);
            if !eligible {
                continue;
            }
            let position = self.nodes[i].motion.position_at(self.tick);
            let deposit = self.contract.required_deposit(&self.registry, &address);
            match self
                .contract
                .register_coordinates(&mut self.ledger, &mut self.registry, address, position, deposit)
            {
                Ok(()) => self.emit(
                    "participation",
                    json!({ "node": address, "deposit_meth": deposit, "position": [position.x, position.y, position.z] }),
                ),
                Err(e) => self.emit("participation_refused", json!({ "node": address, "reason": e.to_string() })),
            }
        }

        match self
            .contract
            .find_route(&mut self.ledger, &mut self.registry, self.config.range_m)
        {
            Ok(route) => {
                self.emit("route_found", json!({ "route": route.hops, "hops": route.hop_count() }));
                let delay = self.timing.sample_hop(&mut self.rng);
                self.pipeline = Some(Pipeline {
                    timeout_at: self.tick + self.timing.timeout_after(route.hops.len()),
                    route: route.hops,
                    in_flight: ciphertext,
                    holder: 0,
                    next_fire: Some(self.tick + delay),
                    opened_tick: self.tick,
                });
                Ok(())
            }
            Err(e) => {
                self.emit("no_route", json!({ "source": src, "destination": dst, "reason": e.to_string() }));
                self.record_closed(self.tick, "no_route", None, None, None);
                Err(e.into())
            }
        }
    }

    /// Advances one tick and returns the resulting snapshot.
    pub fn step(&mut self) -> Snapshot {
        self.advance();
        self.snapshot()
    }

    /// Advances one tick without building a snapshot.
    pub fn advance(&mut self) {
        self.tick += 1;
        self.run_scripted();
        self.apply_pending();
        self.process_pipeline();
    }

    /// Applies queued commands at the current boundary without advancing.
    /// Used while paused so that `resume` and other commands still land.
    pub fn apply_pending(&mut self) {
        while let Some(command) = self.queue.pop_front() {
            let _ = self.apply(command);
        }
    }

    pub fn has_pending(&self) -> bool {
        !self.queue.is_empty()
    }

    /// Runs to `limit`, skipping ticks on which nothing can happen.
    pub fn run_until(&mut self, limit: u64) {
        while self.tick < limit {
            let next = self.next_event_tick().min(limit);
            if next > self.tick + 1 {
                self.tick = next - 1;
            }
            self.advance();
        }
    }

    /// Earliest tick at which some state change is scheduled.
    pub fn next_event_tick(&self) -> u64 {
        if !self.queue.is_empty() {
            return self.tick + 1;
        }
        let mut next = u64::MAX;
        if let Some((at, _)) = self.scripted.get(self.next_scripted) {
            next = next.min((*at).max(self.tick + 1));
        }
        if let Some(p) = &self.pipeline {
            if let Some(fire) = p.next_fire {
                next = next.min(fire);
            }
            next = next.min(p.timeout_at);
        }
        next
    }

    pub fn run_to_horizon(&mut self) {
        let horizon = self.config.horizon_ticks();
        self.run_until(horizon);
    }

    fn run_scripted(&mut self) {
        while let Some((at, command)) = self.scripted.get(self.next_scripted).cloned() {
            if at > self.tick {
                break;
            }
            self.next_scripted += 1;
            let _ = self.apply(command);
        }
    }

    fn process_pipeline(&mut self) {
        let due = self
            .pipeline
            .as_ref()
            .is_some_and(|p| p.next_fire.is_some_and(|t| t <= self.tick));
        if due {
            self.fire_hop();
        }
        let timed_out = self.pipeline.as_ref().is_some_and(|p| self.tick >= p.timeout_at);
        if timed_out {
            self.settle_failure(FailureReason::Timeout);
        }
    }

    fn fire_hop(&mut self) {
        let Some(p) = self.pipeline.as_mut() else { return };
        let position = p.holder;
        let sender = p.route[position];
        let receiver = p.route[position + 1];
        let last = p.route.len() - 1;
        let sender_index = self.nodes.iter().position(|n| n.address == sender).expect("route nodes are simulated");
        match self.nodes[sender_index].behavior.action_at(position) {
            Action::Drop => {
                p.next_fire = None;
                self.links.push(Link { from: sender, to: receiver, style: LinkStyle::BlackDotted });
                self.emit("packet_dropped", json!({ "node": sender, "position": position }));
                return;
            }
            Action::Tamper { offset, mask } => {
                p.in_flight = apply_tamper(&p.in_flight, offset, mask);
                let digest = p.in_flight.digest_hex();
                self.emit("packet_tampered", json!({ "node": sender, "position": position, "payload_digest": digest }));
            }
            Action::Forward => {}
        }
        let p = self.pipeline.as_mut().expect("checked above");
        let data = p.in_flight.clone();
        let now = SimTime::from_ticks(self.tick);
        if let Err(e) = self.contract.send(sender, data.clone(), now) {
            self.emit("contract_error", json!({ "op": "send", "node": sender, "reason": e.to_string() }));
            return;
        }
        let p = self.pipeline.as_mut().expect("checked above");
        p.holder = position + 1;
        self.links.push(Link { from: sender, to: receiver, style: LinkStyle::BlueDotted });
        self.emit(
            "hop_forwarded",
            json!({ "from": sender, "to": receiver, "position": position + 1, "payload_digest": data.digest_hex() }),
        );
        if position + 1 == last {
            if let Some(p) = self.pipeline.as_mut() {
                p.next_fire = None;
            }
            self.evaluate_delivery();
        } else {
            let delay = self.timing.sample_hop(&mut self.rng);
            if let Some(p) = self.pipeline.as_mut() {
                p.next_fire = Some(self.tick + delay);
            }
        }
    }

    /// Destination decrypts what arrived and compares it with the reference copy.
    fn evaluate_delivery(&mut self) {
        let Some(tx) = self.contract.active() else { return };
        let dest = tx.destination;
        let received = tx.route.last().and_then(|h| h.data.clone());
        let reference = tx.reference_ciphertext.clone();
        let keys = &self.nodes.iter().find(|n| n.address == dest).expect("destination is simulated").keys;
        let accepted = match received {
            Some(ct) => match (
                self.scheme.decrypt(&keys.private_key, &ct),
                self.scheme.decrypt(&keys.private_key, &reference),
            ) {
                (Ok(got), Ok(want)) => got == want,
                _ => false,
            },
            None => false,
        };
        if accepted {
            self.settle_success();
        } else {
            self.settle_failure(FailureReason::BadDecrypt);
        }
    }

    fn settle_success(&mut self) {
        let Some(tx) = self.contract.active() else { return };
        let (source, dest) = (tx.source, tx.destination);
        let refunded = match self.contract.success(&mut self.ledger, dest) {
            Ok(r) => r,
            Err(e) => {
                self.emit("contract_error", json!({ "op": "success", "reason": e.to_string() }));
                return;
            }
        };
        self.emit("tx_succeeded", json!({ "destination": dest, "refunded": refunded }));
        let appreciation = TokenAmount::from_milli(self.config.appreciation_meth);
        match self
            .contract
            .trans_completed(&mut self.ledger, &mut self.registry, source, appreciation)
        {
            Ok(paid) => self.emit("appreciation_paid", json!({ "source": source, "amount_meth": appreciation, "to": paid })),
            Err(e) => {
                self.emit("appreciation_skipped", json!({ "source": source, "reason": e.to_string() }));
                if let Err(e) = self
                    .contract
                    .trans_completed(&mut self.ledger, &mut self.registry, source, TokenAmount::ZERO)
                {
                    self.emit("contract_error", json!({ "op": "trans_completed", "reason": e.to_string() }));
                }
            }
        }
        let opened = self.pipeline.take().map_or(self.tick, |p| p.opened_tick);
        self.success_node = Some(dest);
        self.record_closed(opened, "succeeded", None, None, None);
    }

    fn settle_failure(&mut self, reason: FailureReason) {
        let Some(tx) = self.contract.active() else {
            self.pipeline = None;
            return;
        };
        let dest = tx.destination;
        let now = self.now();
        let opened = self.pipeline.as_ref().map_or(self.tick, |p| p.opened_tick);
        match self
            .contract
            .unsuccessful(&mut self.ledger, &mut self.registry, dest, reason, now)
        {
            Ok(Settlement::Culprit { address, position, forfeited, refunded, .. }) => {
                self.pipeline = None;
                let fault_tick = self
                    .contract
                    .get_data(position)
                    .ok()
                    .and_then(|h| h.timestamp)
                    .map(SimTime::ticks);
                let delay = fault_tick.map(|t| crate::time::ticks_to_secs(self.tick - t));
                let record = self.registry.record(&address).ok().cloned();
                self.emit(
                    "tx_failed",
                    json!({
                        "destination": dest,
                        "reason": reason,
                        "culprit": address,
                        "position": position,
                        "detection_delay_s": delay,
                        "forfeited_meth": forfeited,
                        "refunded": refunded,
                        "penalty_token_meth": record.as_ref().map(|r| r.penalty_token),
                        "fault_time_s": record.as_ref().map(|r| r.fault_time.0 / 1000),
                        "blacklist_count": self.registry.blacklist_count(&address),
                    }),
                );
                self.record_closed(opened, "failed", Some((address, position)), Some(reason), fault_tick);
            }
            Ok(Settlement::Voided { refunded }) => {
                self.pipeline = None;
                self.emit("tx_voided", json!({ "destination": dest, "reason": reason, "refunded": refunded }));
                self.record_closed(opened, "voided", None, Some(reason), None);
            }
            Err(e) => {
                // The destination's claim was rejected; stop waiting on it.
                if let Some(p) = self.pipeline.as_mut() {
                    p.timeout_at = u64::MAX;
                }
                self.emit("contract_error", json!({ "op": "unsuccessful", "reason": e.to_string() }));
            }
        }
    }

    fn record_closed(
        &mut self,
        opened_tick: u64,
        outcome: &str,
        culprit: Option<(Address, usize)>,
        reason: Option<FailureReason>,
        fault_tick: Option<u64>,
    ) {
        let Some(tx) = self.contract.current() else { return };
        let stamps: Vec<u64> = tx.route.iter().filter_map(|h| h.timestamp.map(SimTime::ticks)).collect();
        let per_hop_avg_s = (stamps.len() >= 2).then(|| {
            let total = stamps.windows(2).map(|w| w[1] - w[0]).sum::<u64>();
            crate::time::ticks_to_secs(total) / (stamps.len() - 1) as f64
        });
        let metric = TransactionMetric {
            opened_tick,
            closed_tick: self.tick,
            source: tx.source,
            destination: tx.destination,
            route_len: tx.route.len(),
            outcome: outcome.to_owned(),
            culprit: culprit.map(|c| c.0),
            culprit_position: culprit.map(|c| c.1),
            reason,
            fault_tick,
            detection_delay_s: fault_tick.map(|t| crate::time::ticks_to_secs(self.tick - t)),
            per_hop_avg_s,
        };
        self.metrics.push(metric);
    }

    fn emit(&mut self, event_type: &str, payload: serde_json::Value) {
        self.trace.push(TraceRecord::new(self.tick, event_type, payload));
    }

    pub fn token_audit(&self) -> TokenAudit {
        TokenAudit {
            minted_meth: self.ledger.minted().milli(),
            total_supply_meth: self.ledger.total_supply().milli(),
            escrow_meth: self.ledger.balance(&self.ledger.escrow()).map_or(0, TokenAmount::milli),
            conserved: self.ledger.is_conserved(),
        }
    }

    pub fn metrics_report(&self) -> MetricsReport {
        MetricsReport::from_transactions(self.metrics.clone(), self.token_audit())
    }

    /// Current state plus every event since the previous snapshot.
    pub fn snapshot(&mut self) -> Snapshot {
        let events = self.trace[self.snapshot_cursor..].to_vec();
        self.snapshot_cursor = self.trace.len();
        self.peek_snapshot(events)
    }

    /// Current state without consuming pending events.
    pub fn peek_snapshot(&self, events: Vec<TraceRecord>) -> Snapshot {
        let nodes: Vec<NodeView> = self
            .nodes
            .iter()
            .map(|n| {
                let record = self.registry.record(&n.address).ok();
                let faulty = record.is_some_and(|r| r.faulty);
                let p = n.motion.position_at(self.tick);
                let v = n.motion.velocity();
                NodeView {
                    address: n.address,
                    name: n.name.clone(),
                    channel_id: n.channel_id,
                    x: p.x,
                    y: p.y,
                    z: p.z,
                    velocity: v.into(),
                    color_code: ColorCode::for_flags(n.is_gcs, faulty, self.success_node == Some(n.address)),
                    is_gcs: n.is_gcs,
                    registered: record.is_some(),
                    faulty,
                    participating: record.is_some_and(|r| r.participating),
                }
            })
            .collect();
        let points: Vec<(Address, Vec3)> = nodes
            .iter()
            .filter(|n| n.registered && !n.faulty)
            .map(|n| (n.address, Vec3::new(n.x, n.y, n.z)))
            .collect();
        let edges = routing::neighbor_graph(&points, self.config.range_m).edges();
        let transaction = self.contract.current().map(|tx| TransactionView {
            source: tx.source,
            destination: tx.destination,
            route: tx.route_addresses(),
            count: tx.count,
            status: match (tx.active, tx.phase, tx.outcome) {
                (true, Phase::Participation, _) => "participation".into(),
                (true, Phase::Routed, _) if tx.successful => "successful".into(),
                (true, Phase::Routed, _) => "forwarding".into(),
                (false, _, Some(Outcome::Succeeded)) => "succeeded".into(),
                (false, _, Some(Outcome::Failed)) => "failed".into(),
                (false, _, Some(Outcome::Voided)) => "voided".into(),
                (false, _, Some(Outcome::Aborted)) => "aborted".into(),
                (false, _, None) => "closed".into(),
            },
        });
        Snapshot {
            v: snapshot::SNAPSHOT_VERSION,
            tick: self.tick,
            sim_time_s: crate::time::ticks_to_secs(self.tick),
            paused: self.paused,
            speed: self.speed,
            nodes,
            edges,
            links: self.links.clone(),
            node_table: self.registry.node_table(&self.ledger),
            transaction,
            events,
        }
    }
}

/// Headless run to the configured horizon.
pub fn run_scenario(config: ScenarioConfig) -> Result<RunOutput, EngineError> {
    let mut engine = Engine::new(config)?;
    engine.run_to_horizon();
    Ok(RunOutput {
        trace: engine.trace().to_vec(),
        metrics: engine.metrics_report(),
    })
}
