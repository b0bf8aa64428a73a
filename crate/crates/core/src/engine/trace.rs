//! Trace file: one JSON object per line with `tick`, `sim_time_s`,
//! `event_type` and `payload`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::time::ticks_to_secs;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub sim_time_s: f64,
    pub event_type: String,
    pub payload: Value,
}

impl TraceRecord {
    pub fn new(tick: u64, event_type: &str, payload: Value) -> Self {
        TraceRecord {
            tick,
            sim_time_s: ticks_to_secs(tick),
            event_type: event_type.to_owned(),
            payload,
        }
    }
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn line_per_record() {
        let recs = vec![
            TraceRecord::new(580, "hop_forwarded", json!({"position": 1})),
            TraceRecord::new(1160, "tx_failed", json!({})),
        ];
        let text = to_jsonl(&recs);
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"tick":580,"sim_time_s":2.9,"event_type":"hop_forwarded""#));
        assert_eq!(parse_jsonl(&text).unwrap(), recs);
    }
}
