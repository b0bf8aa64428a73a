//! Account book backing every contract operation.
//!
//! Amounts are integer milli-ether so conservation checks are exact. A single
//! escrow account, created at genesis, holds everything paid "to the contract".

use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of ledger units in one ether.
pub const MILLI_PER_ETHER: u64 = 1000;

/// A token amount in milli-ether.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenAmount(pub u64);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub const fn from_milli(milli: u64) -> Self {
        TokenAmount(milli)
    }

    pub const fn ether(ether: u64) -> Self {
        TokenAmount(ether * MILLI_PER_ETHER)
    }

    pub const fn milli(self) -> u64 {
        self.0
    }

    pub fn checked_sub(self, rhs: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_sub(rhs.0).map(TokenAmount)
    }

    pub fn checked_add(self, rhs: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_add(rhs.0).map(TokenAmount)
    }

    pub fn saturating_mul(self, factor: u64) -> TokenAmount {
        TokenAmount(self.0.saturating_mul(factor))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for TokenAmount {
    type Output = TokenAmount;

    fn add(self, rhs: TokenAmount) -> TokenAmount {
        TokenAmount(self.0 + rhs.0)
    }
}

impl AddAssign for TokenAmount {
    fn add_assign(&mut self, rhs: TokenAmount) {
        self.0 += rhs.0;
    }
}

impl Sum for TokenAmount {
    fn sum<I: Iterator<Item = TokenAmount>>(iter: I) -> Self {
        iter.fold(TokenAmount::ZERO, Add::add)
    }
}

/// Renders as `65.20 eth` (two decimals, like the operator node table).
impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / MILLI_PER_ETHER;
        let frac = (self.0 % MILLI_PER_ETHER) / 10;
        write!(f, "{whole}.{frac:02} eth")
    }
}

/// 20-byte account identifier, rendered as `0x`-prefixed lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 20]);

impl Address {
    /// Derives an address from arbitrary key material (last 20 bytes of SHA-256).
    pub fn from_key_material(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[12..]);
        Address(out)
    }

    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.0))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid address: {0}")]
pub struct ParseAddressError(String);

impl FromStr for Address {
    type Err = ParseAddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .ok_or_else(|| ParseAddressError(s.to_owned()))?;
        let bytes = hex::decode(digits).map_err(|_| ParseAddressError(s.to_owned()))?;
        let arr: [u8; 20] = bytes
            .try_into()
            .map_err(|_| ParseAddressError(s.to_owned()))?;
        Ok(Address(arr))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Account {
    pub address: Address,
    pub balance: TokenAmount,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("insufficient funds in {address}: balance {balance}, needed {needed}")]
    InsufficientFunds {
        address: Address,
        balance: TokenAmount,
        needed: TokenAmount,
    },
    #[error("unknown account {0}")]
    UnknownAccount(Address),
    #[error("account {0} already exists")]
    AccountExists(Address),
}

/// Balances of every account, plus the running total of minted supply.
#[derive(Clone, Debug)]
pub struct Ledger {
    accounts: BTreeMap<Address, TokenAmount>,
    escrow: Address,
    minted: TokenAmount,
    next_serial: u64,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    /// Genesis: an empty book holding only the zero-balance escrow account.
    pub fn new() -> Self {
        let escrow = Address::from_key_material(b"uaanet/escrow");
        let mut accounts = BTreeMap::new();
        accounts.insert(escrow, TokenAmount::ZERO);
        Ledger {
            accounts,
            escrow,
            minted: TokenAmount::ZERO,
            next_serial: 0,
        }
    }

    pub fn escrow(&self) -> Address {
        self.escrow
    }

    /// Creates a fresh account with a ledger-chosen address.
    pub fn create_account(&mut self, initial_balance: TokenAmount) -> Address {
        loop {
            let mut material = b"uaanet/account/".to_vec();
            material.extend_from_slice(&self.next_serial.to_be_bytes());
            self.next_serial += 1;
            let address = Address::from_key_material(&material);
            if self.open_account(address, initial_balance).is_ok() {
                return address;
            }
        }
    }

    /// Opens an account at a caller-chosen address (e.g. one derived from a public key).
    pub fn open_account(&mut self, address: Address, initial_balance: TokenAmount) -> Result<(), LedgerError> {
        if self.accounts.contains_key(&address) {
            return Err(LedgerError::AccountExists(address));
        }
        self.accounts.insert(address, initial_balance);
        self.minted += initial_balance;
        Ok(())
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.accounts.contains_key(address)
    }

    pub fn balance(&self, address: &Address) -> Result<TokenAmount, LedgerError> {
        self.accounts
            .get(address)
            .copied()
            .ok_or(LedgerError::UnknownAccount(*address))
    }

    /// Moves `amount` atomically; on any error no balance changes.
    pub fn transfer(&mut self, from: &Address, to: &Address, amount: TokenAmount) -> Result<(), LedgerError> {
        let from_balance = self.balance(from)?;
        let to_balance = self.balance(to)?;
        let remaining = from_balance
            .checked_sub(amount)
            .ok_or(LedgerError::InsufficientFunds {
                address: *from,
                balance: from_balance,
                needed: amount,
            })?;
        if from == to {
            return Ok(());
        }
        let credited = to_balance.checked_add(amount).expect("supply overflow");
        self.accounts.insert(*from, remaining);
        self.accounts.insert(*to, credited);
        Ok(())
    }

    /// Sum of all balances, escrow included.
    pub fn total_supply(&self) -> TokenAmount {
        self.accounts.values().copied().sum()
    }

    /// Sum of every initial balance ever handed out.
    pub fn minted(&self) -> TokenAmount {
        self.minted
    }

    pub fn is_conserved(&self) -> bool {
        self.total_supply() == self.minted
    }

    pub fn accounts(&self) -> impl Iterator<Item = Account> + '_ {
        self.accounts.iter().map(|(address, balance)| Account {
            address: *address,
            balance: *balance,
        })
    }
}
