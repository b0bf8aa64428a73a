//! Observable world state pushed to the console and scripts.

use serde::{Deserialize, Serialize};

use crate::ledger::Address;
use crate::registry::NodeTableRow;

use super::trace::TraceRecord;

/// Stream schema version.
pub const SNAPSHOT_VERSION: u32 = 1;

/// Node colour in the network view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorCode {
    /// Ground control station.
    Blue,
    /// UAV.
    Black,
    /// Detected faulty UAV.
    Red,
    /// Destination of a successful transaction.
    Green,
}

impl ColorCode {
    /// Faulty beats success, which beats the node-type colour.
    pub fn for_flags(is_gcs: bool, faulty: bool, success: bool) -> Self {
        if faulty {
            ColorCode::Red
        } else if success {
            ColorCode::Green
        } else if is_gcs {
            ColorCode::Blue
        } else {
            ColorCode::Black
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStyle {
    /// Data forwarded over this hop.
    BlueDotted,
    /// Packet dropped at the sender of this hop.
    BlackDotted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: Address,
    pub to: Address,
    pub style: LinkStyle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub address: Address,
    pub name: String,
    pub channel_id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub velocity: [f64; 3],
    pub color_code: ColorCode,
    pub is_gcs: bool,
    pub registered: bool,
    pub faulty: bool,
    pub participating: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransactionView {
    pub source: Address,
    pub destination: Address,
    pub route: Vec<Address>,
    pub count: usize,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub v: u32,
    pub tick: u64,
    pub sim_time_s: f64,
    pub paused: bool,
    pub speed: f64,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<(Address, Address)>,
    pub links: Vec<Link>,
    pub node_table: Vec<NodeTableRow>,
    pub transaction: Option<TransactionView>,
    pub events: Vec<TraceRecord>,
}

impl Snapshot {
    /// Checks edges reference known nodes and colours agree with flags.
    pub fn check_consistency(&self) -> Result<(), String> {
        let known = |a: &Address| self.nodes.iter().any(|n| n.address == *a);
        for (a, b) in &self.edges {
            if !known(a) || !known(b) {
                return Err(format!("edge {a}-{b} references an unknown node"));
            }
        }
        for link in &self.links {
            if !known(&link.from) || !known(&link.to) {
                return Err(format!("link {}-{} references an unknown node", link.from, link.to));
            }
        }
        for n in &self.nodes {
            let expected_base = ColorCode::for_flags(n.is_gcs, n.faulty, false);
            let ok = n.color_code == expected_base || (n.color_code == ColorCode::Green && !n.faulty);
            if !ok {
                return Err(format!("node {} has colour {:?} inconsistent with its flags", n.name, n.color_code));
            }
            if n.faulty && n.participating {
                return Err(format!("node {} is faulty but participating", n.name));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colour_table() {
        assert_eq!(ColorCode::for_flags(true, false, false), ColorCode::Blue);
        assert_eq!(ColorCode::for_flags(false, false, false), ColorCode::Black);
        assert_eq!(ColorCode::for_flags(false, true, false), ColorCode::Red);
        assert_eq!(ColorCode::for_flags(false, true, true), ColorCode::Red);
        assert_eq!(ColorCode::for_flags(false, false, true), ColorCode::Green);
        assert_eq!(serde_json::to_string(&LinkStyle::BlueDotted).unwrap(), "\"blue_dotted\"");
    }
}
