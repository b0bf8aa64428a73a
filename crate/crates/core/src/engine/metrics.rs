use serde::{Deserialize, Serialize};

use crate::ledger::Address;
use crate::transaction::FailureReason;

/// Summary of one transaction, recorded when it closes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransactionMetric {
    pub opened_tick: u64,
    pub closed_tick: u64,
    pub source: Address,
    pub destination: Address,
    pub route_len: usize,
    pub outcome: String,
    pub culprit: Option<Address>,
    pub culprit_position: Option<usize>,
    pub reason: Option<FailureReason>,
    /// Tick the culprit received the data (the drop/tamper instant).
    pub fault_tick: Option<u64>,
    pub detection_delay_s: Option<f64>,
    /// Mean receipt-to-receipt interval over the hops that completed.
    pub per_hop_avg_s: Option<f64>,
}

/// One detected fault keyed by route length `n` and hops passed `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub n: usize,
    pub x: usize,
    pub reason: FailureReason,
    pub culprit: Address,
    pub delay_s: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAudit {
    pub minted_meth: u64,
    pub total_supply_meth: u64,
    pub escrow_meth: u64,
    pub conserved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub transactions: Vec<TransactionMetric>,
    pub detections: Vec<DetectionRecord>,
    pub average_per_hop_s: Option<f64>,
    pub culprits: Vec<Address>,
    pub token_audit: TokenAudit,
    pub opened: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub voided: usize,
    pub aborted: usize,
}

impl MetricsReport {
    pub fn from_transactions(transactions: Vec<TransactionMetric>, token_audit: TokenAudit) -> Self {
        let detections = transactions
            .iter()
            .filter_map(|t| {
                Some(DetectionRecord {
                    n: t.route_len,
                    x: t.culprit_position?,
                    reason: t.reason?,
                    culprit: t.culprit?,
                    delay_s: t.detection_delay_s?,
                })
            })
            .collect();
        let per_hop: Vec<f64> = transactions.iter().filter_map(|t| t.per_hop_avg_s).collect();
        let average_per_hop_s = (!per_hop.is_empty()).then(|| per_hop.iter().sum::<f64>() / per_hop.len() as f64);
        let count = |o: &str| transactions.iter().filter(|t| t.outcome == o).count();
        MetricsReport {
            culprits: transactions.iter().filter_map(|t| t.culprit).collect(),
            opened: transactions.len(),
            succeeded: count("succeeded"),
            failed: count("failed"),
            voided: count("voided") + count("no_route"),
            aborted: count("aborted"),
            detections,
            average_per_hop_s,
            transactions,
            token_audit,
        }
    }
}
