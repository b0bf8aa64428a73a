use serde::{Deserialize, Serialize};

use super::behavior::Behavior;

/// Node reference on the wire: node name, `0x` address, or channel id (`8000 + index`).
pub type NodeRef = String;

/// Scenario node, also the payload of [`Command::RegisterNode`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default)]
    pub is_gcs: bool,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub behavior: Behavior,
    /// Key seed; when absent one is derived from the scenario seed and the name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_seed: Option<u64>,
}

/// Operator command, applied by the engine at a tick boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    SetVelocity {
        node: NodeRef,
        vx: f64,
        vy: f64,
        vz: f64,
    },
    StartTransaction {
        source: NodeRef,
        dest: NodeRef,
        #[serde(default)]
        plaintext: String,
    },
    InjectBehavior {
        node: NodeRef,
        behavior: Behavior,
    },
    PayPenalty {
        node: NodeRef,
    },
    Abort {
        gcs: NodeRef,
    },
    RegisterNode {
        spec: NodeSpec,
    },
    Pause {},
    Resume {},
    SetSpeed {
        multiplier: f64,
    },
}

impl Command {
    /// Node references the command mentions, for validation.
    pub fn node_refs(&self) -> Vec<&str> {
        match self {
            Command::SetVelocity { node, .. } | Command::InjectBehavior { node, .. } | Command::PayPenalty { node } => {
                vec![node]
            }
            Command::StartTransaction { source, dest, .. } => vec![source, dest],
            Command::Abort { gcs } => vec![gcs],
            Command::RegisterNode { .. } | Command::Pause {} | Command::Resume {} | Command::SetSpeed { .. } => vec![],
        }
    }
}
