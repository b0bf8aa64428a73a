use serde::{Deserialize, Serialize};

use crate::crypto::Ciphertext;

/// Scripted disposition of a node. Positions count route hops from the
/// source (position 0), so `DropAtHop(k)` fires only when the node sits at
/// route position `k`; elsewhere it forwards honestly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    #[default]
    Honest,
    /// Receives but never forwards.
    DropAtHop(u32),
    /// Forwards a modified ciphertext.
    TamperAtHop {
        hop: u32,
        #[serde(default)]
        offset: usize,
        #[serde(default = "default_mask")]
        mask: u8,
    },
}

fn default_mask() -> u8 {
    0x01
}

/// What a node does with the payload it holds at a given route position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Forward,
    Drop,
    Tamper { offset: usize, mask: u8 },
}

impl Behavior {
    pub fn action_at(&self, position: usize) -> Action {
        match *self {
            Behavior::Honest => Action::Forward,
            Behavior::DropAtHop(k) if k as usize == position => Action::Drop,
            Behavior::TamperAtHop { hop, offset, mask } if hop as usize == position => Action::Tamper { offset, mask },
            _ => Action::Forward,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Behavior::Honest => Ok(()),
            Behavior::DropAtHop(0) | Behavior::TamperAtHop { hop: 0, .. } => {
                Err("hop must be at least 1 (position 0 is the source)".into())
            }
            Behavior::TamperAtHop { mask: 0, .. } => Err("tamper mask must be non-zero".into()),
            _ => Ok(()),
        }
    }

    pub fn is_honest(&self) -> bool {
        matches!(self, Behavior::Honest)
    }
}

/// XORs `mask` into the byte at `offset` (wrapping on the ciphertext length).
pub fn apply_tamper(data: &Ciphertext, offset: usize, mask: u8) -> Ciphertext {
    let mut bytes = data.0.clone();
    if bytes.is_empty() {
        bytes.push(mask);
    } else {
        let i = offset % bytes.len();
        bytes[i] ^= mask;
    }
    Ciphertext(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn actions_fire_only_at_their_position() {
        let d = Behavior::DropAtHop(2);
        assert_eq!(d.action_at(1), Action::Forward);
        assert_eq!(d.action_at(2), Action::Drop);
        let t = Behavior::TamperAtHop { hop: 3, offset: 4, mask: 0x10 };
        assert_eq!(t.action_at(3), Action::Tamper { offset: 4, mask: 0x10 });
        assert_eq!(Behavior::Honest.action_at(5), Action::Forward);
    }

    #[test]
    fn validation() {
        assert!(Behavior::DropAtHop(0).validate().is_err());
        assert!(Behavior::TamperAtHop { hop: 1, offset: 0, mask: 0 }.validate().is_err());
        assert!(Behavior::DropAtHop(1).validate().is_ok());
    }

    #[test]
    fn tamper_changes_bytes() {
        let ct = Ciphertext(vec![1, 2, 3]);
        assert_eq!(apply_tamper(&ct, 4, 0xff).0, vec![1, 0xfd, 3]);
        assert_ne!(apply_tamper(&Ciphertext(vec![]), 0, 1), Ciphertext(vec![]));
    }

    #[test]
    fn toml_forms() {
        #[derive(Deserialize)]
        struct W {
            b: Behavior,
        }
        let w: W = toml::from_str("b = \"honest\"").unwrap();
        assert_eq!(w.b, Behavior::Honest);
        let w: W = toml::from_str("b = { drop_at_hop = 3 }").unwrap();
        assert_eq!(w.b, Behavior::DropAtHop(3));
        let w: W = toml::from_str("b = { tamper_at_hop = { hop = 2 } }").unwrap();
        assert_eq!(w.b, Behavior::TamperAtHop { hop: 2, offset: 0, mask: 1 });
    }
}
