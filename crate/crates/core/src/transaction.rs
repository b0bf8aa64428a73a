//! Data-sending contract: one transaction at a time, a ledgered cell per
//! route position, settlement and culprit attribution.
//!
//! Lifecycle: `do_trans` opens a participation window, nodes call
//! `register_coordinates`, `find_route` fixes the route, route members call
//! `send` in turn, and the destination settles with `success` (then the source
//! calls `trans_completed`) or `unsuccessful`. A GCS may `abort` at any time.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::crypto::Ciphertext;
use crate::geometry::Vec3;
use crate::ledger::{Address, Ledger, LedgerError, TokenAmount};
use crate::registry::{Registry, RegistryError};
use crate::routing::{self, Route, RoutingError};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TransactionParams {
    /// Stake each participating non-GCS relay locks for the transaction.
    pub guarantee: TokenAmount,
}

impl Default for TransactionParams {
    fn default() -> Self {
        TransactionParams {
            guarantee: TokenAmount::ether(1),
        }
    }
}

/// Ledger cell for one route position: what that node received and when.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HopRecord {
    pub node: Address,
    pub data: Option<Ciphertext>,
    pub timestamp: Option<SimTime>,
    pub deposit_held: TokenAmount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Window open for `register_coordinates`.
    Participation,
    /// Route fixed, data moving.
    Routed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Succeeded,
    Failed,
    Voided,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ActiveTransaction {
    pub active: bool,
    pub source: Address,
    pub destination: Address,
    pub start_timestamp: SimTime,
    pub phase: Phase,
    pub route: Vec<HopRecord>,
    /// Index of the route position whose turn it is to send.
    pub count: usize,
    pub successful: bool,
    pub culprit: Option<Address>,
    /// Copy of the source's ciphertext used as the tamper reference.
    pub reference_ciphertext: Ciphertext,
    /// Guarantee deposits still held in escrow, by participant.
    pub deposits: BTreeMap<Address, TokenAmount>,
    pub outcome: Option<Outcome>,
}

impl ActiveTransaction {
    pub fn route_addresses(&self) -> Vec<Address> {
        self.route.iter().map(|h| h.node).collect()
    }

    pub fn is_delivered(&self) -> bool {
        !self.route.is_empty() && self.count == self.route.len() - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// Data did not arrive in time (drop).
    Timeout,
    /// Data arrived but failed to decrypt or match the reference (tamper).
    BadDecrypt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Settlement {
    Culprit {
        address: Address,
        position: usize,
        reason: FailureReason,
        forfeited: TokenAmount,
        refunded: Vec<(Address, TokenAmount)>,
    },
    /// Nothing left the source; no one is blamed and every deposit is returned.
    Voided { refunded: Vec<(Address, TokenAmount)> },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AbortReport {
    pub voided_transaction: bool,
    pub refunded: Vec<(Address, TokenAmount)>,
    pub removed: Vec<Address>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransactionError {
    #[error("a transaction is already in progress")]
    TransactionInProgress,
    #[error("source and destination are the same")]
    SelfSend,
    #[error("{0} is not registered")]
    Unregistered(Address),
    #[error("{0} is faulty and must pay its penalty first")]
    NodeFaulty(Address),
    #[error("no active transaction")]
    NoActiveTransaction,
    #[error("participation window is closed")]
    ParticipationClosed,
    #[error("{0} is already participating")]
    AlreadyParticipating(Address),
    #[error("wrong guarantee deposit: expected {expected}, got {got}")]
    WrongDeposit { expected: TokenAmount, got: TokenAmount },
    #[error("route has not been fixed yet")]
    NotRouted,
    #[error("it is not {0}'s turn to send")]
    NotYourTurn(Address),
    #[error("transaction is closed")]
    TransactionClosed,
    #[error("caller is not the destination")]
    NotDestination,
    #[error("caller is not the source")]
    NotSource,
    #[error("data has not reached the destination")]
    NotDelivered,
    #[error("transaction was not successful")]
    NotSuccessful,
    #[error("no culprit found: every hop cell matches the reference")]
    NoCulpritFound,
    #[error("position {position} out of range (route length {len})")]
    OutOfRange { position: usize, len: usize },
    #[error("no transaction recorded")]
    NoTransaction,
    #[error("only a GCS may abort")]
    NotGcs,
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Clone, Debug, Default)]
pub struct DataSending {
    params: TransactionParams,
    current: Option<ActiveTransaction>,
    last_culprit: Option<Address>,
}

impl DataSending {
    pub fn new(params: TransactionParams) -> Self {
        DataSending {
            params,
            current: None,
            last_culprit: None,
        }
    }

    pub fn params(&self) -> &TransactionParams {
        &self.params
    }

    /// The open transaction, or the last closed one.
    pub fn current(&self) -> Option<&ActiveTransaction> {
        self.current.as_ref()
    }

    pub fn active(&self) -> Option<&ActiveTransaction> {
        self.current.as_ref().filter(|t| t.active)
    }

    pub fn do_trans(
        &mut self,
        registry: &Registry,
        sender: Address,
        dest: Address,
        payload: Ciphertext,
        now: SimTime,
    ) -> Result<(), TransactionError> {
        if self.active().is_some() {
            return Err(TransactionError::TransactionInProgress);
        }
        if sender == dest {
            return Err(TransactionError::SelfSend);
        }
        for endpoint in [sender, dest] {
            let record = registry
                .record(&endpoint)
                .map_err(|_| TransactionError::Unregistered(endpoint))?;
            if record.faulty {
                return Err(TransactionError::NodeFaulty(endpoint));
            }
        }
        self.current = Some(ActiveTransaction {
            active: true,
            source: sender,
            destination: dest,
            start_timestamp: now,
            phase: Phase::Participation,
            route: Vec::new(),
            count: 0,
            successful: false,
            culprit: None,
            reference_ciphertext: payload,
            deposits: BTreeMap::new(),
            outcome: None,
        });
        Ok(())
    }

    /// Guarantee a node must lock to take part in the open transaction.
    pub fn required_deposit(&self, registry: &Registry, address: &Address) -> TokenAmount {
        let endpoint = self
            .active()
            .is_some_and(|t| t.source == *address || t.destination == *address);
        let gcs = registry.record(address).is_ok_and(|r| r.is_gcs);
        if endpoint || gcs {
            TokenAmount::ZERO
        } else {
            self.params.guarantee
        }
    }

    pub fn register_coordinates(
        &mut self,
        ledger: &mut Ledger,
        registry: &mut Registry,
        address: Address,
        position: Vec3,
        deposit: TokenAmount,
    ) -> Result<(), TransactionError> {
        let expected = self.required_deposit(registry, &address);
        let tx = self
            .current
            .as_mut()
            .filter(|t| t.active)
            .ok_or(TransactionError::NoActiveTransaction)?;
        if tx.phase != Phase::Participation {
            return Err(TransactionError::ParticipationClosed);
        }
        let record = registry
            .record(&address)
            .map_err(|_| TransactionError::Unregistered(address))?;
        if record.faulty {
            return Err(TransactionError::NodeFaulty(address));
        }
        if record.participating {
            return Err(TransactionError::AlreadyParticipating(address));
        }
        if deposit != expected {
            return Err(TransactionError::WrongDeposit { expected, got: deposit });
        }
        let escrow = ledger.escrow();
        ledger.transfer(&address, &escrow, deposit)?;
        let record = registry.record_mut(&address)?;
        record.participating = true;
        record.position = position;
        if !deposit.is_zero() {
            tx.deposits.insert(address, deposit);
        }
        Ok(())
    }

    /// Closes the participation window and fixes the minimum-hop route.
    /// When no route exists the transaction is voided and deposits returned.
    pub fn find_route(&mut self, ledger: &mut Ledger, registry: &mut Registry, range_m: f64) -> Result<Route, TransactionError> {
        let tx = self
            .current
            .as_mut()
            .filter(|t| t.active)
            .ok_or(TransactionError::NoActiveTransaction)?;
        if tx.phase != Phase::Participation {
            return Err(TransactionError::ParticipationClosed);
        }
        let table = routing::update_graph(registry.records(), range_m);
        let found = if table.contains(&tx.source) && table.contains(&tx.destination) {
            routing::path_find(&table, tx.source, tx.destination)
        } else {
            Err(RoutingError::NoRoute)
        };
        match found {
            Ok(route) => {
                tx.route = route
                    .hops
                    .iter()
                    .map(|node| HopRecord {
                        node: *node,
                        data: None,
                        timestamp: None,
                        deposit_held: tx.deposits.get(node).copied().unwrap_or_default(),
                    })
                    .collect();
                tx.phase = Phase::Routed;
                Ok(route)
            }
            Err(e) => {
                refund(ledger, tx, None)?;
                close(tx, registry, Outcome::Voided);
                self.last_culprit = None;
                Err(e.into())
            }
        }
    }

    /// The node whose turn it is hands `data` to the next route position.
    pub fn send(&mut self, caller: Address, data: Ciphertext, now: SimTime) -> Result<usize, TransactionError> {
        let tx = self
            .current
            .as_mut()
            .filter(|t| t.active)
            .ok_or(TransactionError::TransactionClosed)?;
        if tx.phase != Phase::Routed {
            return Err(TransactionError::NotRouted);
        }
        if tx.count + 1 >= tx.route.len() || tx.route[tx.count].node != caller {
            return Err(TransactionError::NotYourTurn(caller));
        }
        if tx.count == 0 {
            let cell = &mut tx.route[0];
            cell.data = Some(data.clone());
            cell.timestamp = Some(tx.start_timestamp);
        }
        let next = &mut tx.route[tx.count + 1];
        next.data = Some(data);
        next.timestamp = Some(now);
        tx.count += 1;
        Ok(tx.count)
    }

    /// Destination confirms delivery; all held guarantees are returned.
    pub fn success(&mut self, ledger: &mut Ledger, caller: Address) -> Result<Vec<(Address, TokenAmount)>, TransactionError> {
        let tx = self
            .current
            .as_mut()
            .filter(|t| t.active)
            .ok_or(TransactionError::NoActiveTransaction)?;
        if caller != tx.destination {
            return Err(TransactionError::NotDestination);
        }
        if !tx.is_delivered() {
            return Err(TransactionError::NotDelivered);
        }
        tx.successful = true;
        Ok(refund(ledger, tx, None)?)
    }

    /// Source pays `appreciation` to every intermediary and closes.
    /// Payment is all-or-nothing.
    pub fn trans_completed(
        &mut self,
        ledger: &mut Ledger,
        registry: &mut Registry,
        caller: Address,
        appreciation: TokenAmount,
    ) -> Result<Vec<Address>, TransactionError> {
        let tx = self
            .current
            .as_mut()
            .filter(|t| t.active)
            .ok_or(TransactionError::NoActiveTransaction)?;
        if caller != tx.source {
            return Err(TransactionError::NotSource);
        }
        if !tx.successful {
            return Err(TransactionError::NotSuccessful);
        }
        let intermediaries: Vec<Address> = tx.route[1..tx.route.len() - 1].iter().map(|h| h.node).collect();
        let total = appreciation.saturating_mul(intermediaries.len() as u64);
        let balance = ledger.balance(&caller)?;
        if balance < total {
            return Err(LedgerError::InsufficientFunds {
                address: caller,
                balance,
                needed: total,
            }
            .into());
        }
        for node in &intermediaries {
            ledger.transfer(&caller, node, appreciation)?;
        }
        close(tx, registry, Outcome::Succeeded);
        self.last_culprit = None;
        Ok(intermediaries)
    }

    /// Destination reports a failure; the contract names the culprit.
    pub fn unsuccessful(
        &mut self,
        ledger: &mut Ledger,
        registry: &mut Registry,
        caller: Address,
        reason: FailureReason,
        now: SimTime,
    ) -> Result<Settlement, TransactionError> {
        let tx = self
            .current
            .as_mut()
            .filter(|t| t.active)
            .ok_or(TransactionError::NoActiveTransaction)?;
        if caller != tx.destination {
            return Err(TransactionError::NotDestination);
        }
        if tx.phase != Phase::Routed {
            return Err(TransactionError::NotRouted);
        }
        let position = match reason {
            FailureReason::Timeout => {
                let last = tx.route.iter().rposition(|h| h.data.is_some());
                match last {
                    Some(j) if j == tx.route.len() - 1 => return Err(TransactionError::NoCulpritFound),
                    Some(j) if j > 0 => Some(j),
                    _ => None,
                }
            }
            FailureReason::BadDecrypt => {
                let reference = &tx.reference_ciphertext;
                let first_bad = (1..tx.route.len()).find(|&i| tx.route[i].data.as_ref() != Some(reference));
                match first_bad {
                    Some(i) => Some(i - 1),
                    None => return Err(TransactionError::NoCulpritFound),
                }
            }
        };
        let settlement = match position {
            None => {
                let refunded = refund(ledger, tx, None)?;
                close(tx, registry, Outcome::Voided);
                self.last_culprit = None;
                Settlement::Voided { refunded }
            }
            Some(position) => {
                let culprit = tx.route[position].node;
                let forfeited = tx.deposits.remove(&culprit).unwrap_or_default();
                let refunded = refund(ledger, tx, Some(culprit))?;
                registry.escalate_fault(culprit, now)?;
                tx.culprit = Some(culprit);
                close(tx, registry, Outcome::Failed);
                self.last_culprit = Some(culprit);
                Settlement::Culprit {
                    address: culprit,
                    position,
                    reason,
                    forfeited,
                    refunded,
                }
            }
        };
        Ok(settlement)
    }

    /// Culprit of the last closed transaction, if it failed.
    pub fn return_culprit(&self) -> Option<Address> {
        self.last_culprit
    }

    pub fn get_data(&self, position: usize) -> Result<&HopRecord, TransactionError> {
        let tx = self.current.as_ref().ok_or(TransactionError::NoTransaction)?;
        tx.route.get(position).ok_or(TransactionError::OutOfRange {
            position,
            len: tx.route.len(),
        })
    }

    /// GCS-only: voids any open transaction, clears participation and removes
    /// nodes at the blacklist threshold.
    pub fn abort(&mut self, ledger: &mut Ledger, registry: &mut Registry, caller: Address) -> Result<AbortReport, TransactionError> {
        let is_gcs = registry
            .record(&caller)
            .map_err(|_| TransactionError::NotGcs)?
            .is_gcs;
        if !is_gcs {
            return Err(TransactionError::NotGcs);
        }
        let mut report = AbortReport::default();
        if let Some(tx) = self.current.as_mut().filter(|t| t.active) {
            report.refunded = refund(ledger, tx, None)?;
            close(tx, registry, Outcome::Aborted);
            report.voided_transaction = true;
            self.last_culprit = None;
        }
        registry.clear_participation();
        report.removed = registry.remove_blacklisted();
        Ok(report)
    }
}

/// Returns held deposits from escrow to everyone except `except`.
fn refund(ledger: &mut Ledger, tx: &mut ActiveTransaction, except: Option<Address>) -> Result<Vec<(Address, TokenAmount)>, LedgerError> {
    let escrow = ledger.escrow();
    let owed: Vec<(Address, TokenAmount)> = tx
        .deposits
        .iter()
        .filter(|(a, _)| Some(**a) != except)
        .map(|(a, v)| (*a, *v))
        .collect();
    for (address, amount) in &owed {
        ledger.transfer(&escrow, address, *amount)?;
        tx.deposits.remove(address);
    }
    Ok(owed)
}

fn close(tx: &mut ActiveTransaction, registry: &mut Registry, outcome: Outcome) {
    tx.active = false;
    tx.outcome = Some(outcome);
    registry.clear_participation();
}
