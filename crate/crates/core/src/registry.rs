//! Node registration contract: deposits, fault lifecycle, blacklist.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::crypto::PublicKey;
use crate::geometry::Vec3;
use crate::ledger::{Address, Ledger, LedgerError, TokenAmount};
use crate::time::{SimDuration, SimTime};

/// Economic constants of the registration contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RegistryParams {
    pub registration_fee: TokenAmount,
    /// Penalty set on the first offense.
    pub base_penalty: TokenAmount,
    /// Payment window set on the first offense.
    pub base_fault_window: SimDuration,
    pub penalty_factor: u64,
    pub window_factor: u64,
    /// Blacklist count at which abort removes a node for good.
    pub removal_threshold: u32,
}

impl Default for RegistryParams {
    fn default() -> Self {
        RegistryParams {
            registration_fee: TokenAmount::ether(5),
            base_penalty: TokenAmount::ether(2),
            base_fault_window: SimDuration::from_secs(10),
            penalty_factor: 2,
            window_factor: 10,
            removal_threshold: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeRecord {
    pub address: Address,
    pub public_key: PublicKey,
    /// Window the node has to pay its penalty, counted from `timestamp`.
    pub fault_time: SimDuration,
    pub penalty_token: TokenAmount,
    pub participating: bool,
    pub timestamp: SimTime,
    pub position: Vec3,
    pub is_gcs: bool,
    pub faulty: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BlacklistEntry {
    pub address: Address,
    pub count: u32,
}

/// What `get_table` returns for one address. `record` is `None` once removed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableEntry {
    pub record: Option<NodeRecord>,
    pub blacklist: BlacklistEntry,
}

/// One row of the operator node table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct NodeTableRow {
    pub address: Address,
    pub blacklist_count: u32,
    pub faulty_time_s: u64,
    pub penalty_token_meth: u64,
    pub balance_meth: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("{0} is already registered")]
    AlreadyRegistered(Address),
    #[error("{0} is blacklisted and cannot register again")]
    Blacklisted(Address),
    #[error("wrong deposit: expected {expected}, got {got}")]
    WrongDeposit { expected: TokenAmount, got: TokenAmount },
    #[error("{0} is not faulty")]
    NotFaulty(Address),
    #[error("wrong penalty amount: expected {expected}, got {got}")]
    WrongAmount { expected: TokenAmount, got: TokenAmount },
    #[error("penalty window lapsed; penalty is now {penalty_token}, window {fault_time}")]
    WindowLapsed {
        penalty_token: TokenAmount,
        fault_time: SimDuration,
    },
    #[error("unknown node {0}")]
    UnknownNode(Address),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Clone, Debug, Default)]
pub struct Registry {
    params: RegistryParams,
    records: BTreeMap<Address, NodeRecord>,
    blacklist: BTreeMap<Address, u32>,
    removed: BTreeSet<Address>,
}

impl Registry {
    pub fn new(params: RegistryParams) -> Self {
        Registry {
            params,
            ..Default::default()
        }
    }

    pub fn params(&self) -> &RegistryParams {
        &self.params
    }

    pub fn register(
        &mut self,
        ledger: &mut Ledger,
        address: Address,
        public_key: PublicKey,
        is_gcs: bool,
        deposit: TokenAmount,
        now: SimTime,
    ) -> Result<(), RegistryError> {
        if self.records.contains_key(&address) {
            return Err(RegistryError::AlreadyRegistered(address));
        }
        if self.is_permanently_blacklisted(&address) {
            return Err(RegistryError::Blacklisted(address));
        }
        if deposit != self.params.registration_fee {
            return Err(RegistryError::WrongDeposit {
                expected: self.params.registration_fee,
                got: deposit,
            });
        }
        let escrow = ledger.escrow();
        ledger.transfer(&address, &escrow, deposit)?;
        self.records.insert(
            address,
            NodeRecord {
                address,
                public_key,
                fault_time: SimDuration::ZERO,
                penalty_token: TokenAmount::ZERO,
                participating: false,
                timestamp: now,
                position: Vec3::ZERO,
                is_gcs,
                faulty: false,
            },
        );
        self.blacklist.entry(address).or_insert(0);
        Ok(())
    }

    /// Clears the fault if the exact penalty arrives within the window.
    /// A late payment is refused and escalates the fault instead.
    pub fn pay_penalty(
        &mut self,
        ledger: &mut Ledger,
        address: Address,
        amount: TokenAmount,
        now: SimTime,
    ) -> Result<(), RegistryError> {
        let record = self.record(&address)?;
        if !record.faulty {
            return Err(RegistryError::NotFaulty(address));
        }
        if now.saturating_since(record.timestamp) > record.fault_time {
            let escalated = self.escalate_fault(address, now)?;
            return Err(RegistryError::WindowLapsed {
                penalty_token: escalated.penalty_token,
                fault_time: escalated.fault_time,
            });
        }
        if amount != record.penalty_token {
            return Err(RegistryError::WrongAmount {
                expected: record.penalty_token,
                got: amount,
            });
        }
        let escrow = ledger.escrow();
        ledger.transfer(&address, &escrow, amount)?;
        let record = self.records.get_mut(&address).expect("checked above");
        record.faulty = false;
        Ok(())
    }

    /// Records one offense: first offense uses the base penalty and window,
    /// later ones multiply the previous values.
    pub fn escalate_fault(&mut self, address: Address, now: SimTime) -> Result<NodeRecord, RegistryError> {
        let params = self.params;
        let record = self
            .records
            .get_mut(&address)
            .ok_or(RegistryError::UnknownNode(address))?;
        let count = self.blacklist.entry(address).or_insert(0);
        if *count == 0 {
            record.penalty_token = params.base_penalty;
            record.fault_time = params.base_fault_window;
        } else {
            record.penalty_token = record.penalty_token.saturating_mul(params.penalty_factor);
            record.fault_time = record.fault_time.saturating_mul(params.window_factor);
        }
        *count += 1;
        record.faulty = true;
        record.participating = false;
        record.timestamp = now;
        Ok(record.clone())
    }

    pub fn get_table(&self, address: &Address) -> Result<TableEntry, RegistryError> {
        let count = *self
            .blacklist
            .get(address)
            .ok_or(RegistryError::UnknownNode(*address))?;
        Ok(TableEntry {
            record: self.records.get(address).cloned(),
            blacklist: BlacklistEntry {
                address: *address,
                count,
            },
        })
    }

    /// Node table rows (registered and removed addresses), ordered by address.
    pub fn node_table(&self, ledger: &Ledger) -> Vec<NodeTableRow> {
        self.blacklist
            .iter()
            .map(|(address, count)| {
                let record = self.records.get(address);
                NodeTableRow {
                    address: *address,
                    blacklist_count: *count,
                    faulty_time_s: record.map_or(0, |r| r.fault_time.0 / 1000),
                    penalty_token_meth: record.map_or(0, |r| r.penalty_token.milli()),
                    balance_meth: ledger.balance(address).map_or(0, TokenAmount::milli),
                }
            })
            .collect()
    }

    pub fn record(&self, address: &Address) -> Result<&NodeRecord, RegistryError> {
        self.records
            .get(address)
            .ok_or(RegistryError::UnknownNode(*address))
    }

    pub(crate) fn record_mut(&mut self, address: &Address) -> Result<&mut NodeRecord, RegistryError> {
        self.records
            .get_mut(address)
            .ok_or(RegistryError::UnknownNode(*address))
    }

    pub fn records(&self) -> impl Iterator<Item = &NodeRecord> {
        self.records.values()
    }

    pub fn is_registered(&self, address: &Address) -> bool {
        self.records.contains_key(address)
    }

    pub fn blacklist_count(&self, address: &Address) -> u32 {
        self.blacklist.get(address).copied().unwrap_or(0)
    }

    pub fn is_removed(&self, address: &Address) -> bool {
        self.removed.contains(address)
    }

    fn is_permanently_blacklisted(&self, address: &Address) -> bool {
        self.removed.contains(address) || self.blacklist_count(address) >= self.params.removal_threshold
    }

    pub(crate) fn clear_participation(&mut self) {
        for record in self.records.values_mut() {
            record.participating = false;
        }
    }

    /// Drops every record whose blacklist count reached the removal threshold.
    pub(crate) fn remove_blacklisted(&mut self) -> Vec<Address> {
        let threshold = self.params.removal_threshold;
        let doomed: Vec<Address> = self
            .records
            .keys()
            .filter(|a| self.blacklist.get(a).copied().unwrap_or(0) >= threshold)
            .copied()
            .collect();
        for address in &doomed {
            self.records.remove(address);
            self.removed.insert(*address);
        }
        doomed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;

    fn setup() -> (Ledger, Registry, Address) {
        let mut ledger = Ledger::new();
        let a = ledger.create_account(TokenAmount::ether(100));
        (ledger, Registry::new(RegistryParams::default()), a)
    }

    fn pk() -> PublicKey {
        keygen([1; 32]).public_key
    }

    #[test]
    fn registration_takes_five_ether() {
        let (mut ledger, mut reg, a) = setup();
        reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(0)).unwrap();
        assert_eq!(ledger.balance(&a).unwrap(), TokenAmount::ether(95));
        assert_eq!(ledger.balance(&ledger.escrow()).unwrap(), TokenAmount::ether(5));
        let entry = reg.get_table(&a).unwrap();
        let rec = entry.record.unwrap();
        assert!(!rec.faulty && !rec.participating);
        assert_eq!(rec.penalty_token, TokenAmount::ZERO);
        assert_eq!(entry.blacklist.count, 0);
    }

    #[test]
    fn double_registration_is_refused_without_charge() {
        let (mut ledger, mut reg, a) = setup();
        reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(0)).unwrap();
        let err = reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(0));
        assert_eq!(err, Err(RegistryError::AlreadyRegistered(a)));
        assert_eq!(ledger.balance(&a).unwrap(), TokenAmount::ether(95));
    }

    #[test]
    fn wrong_deposit_and_poor_caller_are_refused() {
        let (mut ledger, mut reg, a) = setup();
        assert!(matches!(
            reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(4), SimTime(0)),
            Err(RegistryError::WrongDeposit { .. })
        ));
        let poor = ledger.create_account(TokenAmount::ether(1));
        assert!(matches!(
            reg.register(&mut ledger, poor, pk(), false, TokenAmount::ether(5), SimTime(0)),
            Err(RegistryError::Ledger(LedgerError::InsufficientFunds { .. }))
        ));
        assert!(!reg.is_registered(&poor));
        assert_eq!(ledger.balance(&ledger.escrow()).unwrap(), TokenAmount::ZERO);
    }

    #[test]
    fn escalation_is_geometric() {
        let (mut ledger, mut reg, a) = setup();
        reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(0)).unwrap();
        for k in 1..=12u32 {
            let rec = reg.escalate_fault(a, SimTime(k as u64)).unwrap();
            assert_eq!(rec.penalty_token, TokenAmount::ether(2 * 2u64.pow(k - 1)));
            assert_eq!(rec.fault_time, SimDuration::from_secs(10 * 10u64.pow(k - 1)));
            assert!(rec.faulty && !rec.participating);
            assert_eq!(reg.blacklist_count(&a), k);
        }
    }

    #[test]
    fn penalty_paid_in_window_clears_fault() {
        let (mut ledger, mut reg, a) = setup();
        reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(0)).unwrap();
        reg.escalate_fault(a, SimTime(1_000)).unwrap();
        assert!(matches!(
            reg.pay_penalty(&mut ledger, a, TokenAmount::ether(1), SimTime(2_000)),
            Err(RegistryError::WrongAmount { .. })
        ));
        reg.pay_penalty(&mut ledger, a, TokenAmount::ether(2), SimTime(11_000)).unwrap();
        assert!(!reg.record(&a).unwrap().faulty);
        assert_eq!(ledger.balance(&a).unwrap(), TokenAmount::ether(93));
        assert_eq!(reg.blacklist_count(&a), 1);
        assert!(ledger.is_conserved());
    }

    #[test]
    fn non_faulty_cannot_pay() {
        let (mut ledger, mut reg, a) = setup();
        reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(0)).unwrap();
        assert_eq!(
            reg.pay_penalty(&mut ledger, a, TokenAmount::ether(2), SimTime(0)),
            Err(RegistryError::NotFaulty(a))
        );
        assert_eq!(ledger.balance(&a).unwrap(), TokenAmount::ether(95));
    }

    #[test]
    fn late_payment_escalates() {
        let (mut ledger, mut reg, a) = setup();
        reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(0)).unwrap();
        reg.escalate_fault(a, SimTime(0)).unwrap();
        let err = reg.pay_penalty(&mut ledger, a, TokenAmount::ether(2), SimTime(10_001));
        assert_eq!(
            err,
            Err(RegistryError::WindowLapsed {
                penalty_token: TokenAmount::ether(4),
                fault_time: SimDuration::from_secs(100),
            })
        );
        assert_eq!(ledger.balance(&a).unwrap(), TokenAmount::ether(95));
        assert_eq!(reg.blacklist_count(&a), 2);
    }

    #[test]
    fn removed_node_is_refused_forever() {
        let (mut ledger, mut reg, a) = setup();
        reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(0)).unwrap();
        for k in 0..10 {
            reg.escalate_fault(a, SimTime(k)).unwrap();
        }
        assert_eq!(reg.remove_blacklisted(), vec![a]);
        assert!(reg.get_table(&a).unwrap().record.is_none());
        assert_eq!(reg.get_table(&a).unwrap().blacklist.count, 10);
        assert_eq!(
            reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(99)),
            Err(RegistryError::Blacklisted(a))
        );
        assert_eq!(ledger.balance(&a).unwrap(), TokenAmount::ether(95));
    }

    #[test]
    fn node_table_rows() {
        let (mut ledger, mut reg, a) = setup();
        reg.register(&mut ledger, a, pk(), false, TokenAmount::ether(5), SimTime(0)).unwrap();
        reg.escalate_fault(a, SimTime(0)).unwrap();
        let rows = reg.node_table(&ledger);
        assert_eq!(
            rows,
            vec![NodeTableRow {
                address: a,
                blacklist_count: 1,
                faulty_time_s: 10,
                penalty_token_meth: 2000,
                balance_meth: 95_000,
            }]
        );
        let json = serde_json::to_value(&rows[0]).unwrap();
        assert_eq!(json.as_object().unwrap().len(), 5);
    }

    #[test]
    fn unknown_node() {
        let (_, mut reg, a) = setup();
        assert_eq!(reg.get_table(&a), Err(RegistryError::UnknownNode(a)));
        assert!(reg.escalate_fault(a, SimTime(0)).is_err());
    }
}
