#![allow(dead_code)]

use std::fmt::Write;

use uaanet::engine::Engine;
use uaanet::Address;

pub const TICKS_PER_S: f64 = 200.0;
pub const START_TICK: u64 = 200;

/// Independent TOML text for an `n`-node chain with GCS endpoints
/// `src`/`dst` and intermediaries `uav1..`. Nodes sit 75 m apart so only
/// neighbours are in the default 100 m range.
pub fn chain_toml(n: usize, per_hop_s: f64, behaviors: &[(usize, &str)], extra: &str) -> String {
    let mut s = String::new();
    let horizon = 1.0 + (n - 1) as f64 * per_hop_s + 10.0;
    writeln!(s, "per_hop_delay_s = {per_hop_s}\nhorizon_s = {horizon:.3}\n{extra}").unwrap();
    for i in 0..n {
        let name = node_name(n, i);
        let gcs = i == 0 || i == n - 1;
        writeln!(s, "[[nodes]]\nname = \"{name}\"\nis_gcs = {gcs}\nposition = [{}.0, 5.0, 12.0]", i * 75).unwrap();
        if let Some((_, b)) = behaviors.iter().find(|(p, _)| *p == i) {
            writeln!(s, "behavior = {b}").unwrap();
        }
        writeln!(s).unwrap();
    }
    writeln!(
        s,
        "[[actions]]\nat_s = 1.0\naction = {{ type = \"start_transaction\", source = \"src\", dest = \"dst\", plaintext = \"payload for {n}\" }}"
    )
    .unwrap();
    s
}

pub fn node_name(n: usize, i: usize) -> String {
    if i == 0 {
        "src".into()
    } else if i == n - 1 {
        "dst".into()
    } else {
        format!("uav{i}")
    }
}

pub fn name_of(engine: &Engine, address: Address) -> String {
    engine
        .nodes()
        .iter()
        .find(|n| n.address == address)
        .map(|n| n.name.clone())
        .unwrap_or_else(|| address.to_string())
}

/// Advances until the open transaction (if any) has closed.
pub fn run_to_idle(engine: &mut Engine) {
    while !engine.is_idle() {
        let next = engine.next_event_tick();
        engine.run_until(next);
    }
}

pub fn ticks(seconds: f64) -> u64 {
    (seconds * TICKS_PER_S).round() as u64
}

pub fn events<'a>(engine: &'a Engine, kind: &'a str) -> impl Iterator<Item = &'a uaanet::engine::TraceRecord> + 'a {
    engine.trace().iter().filter(move |r| r.event_type == kind)
}
