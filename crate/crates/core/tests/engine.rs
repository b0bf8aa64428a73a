mod common;

use common::*;
use uaanet::engine::{Behavior, ColorCode, Command, Engine, EngineError, NodeSpec};
use uaanet::gateway::load_scenario;
use uaanet::registry::RegistryError;
use uaanet::transaction::TransactionError;

fn engine(text: &str) -> Engine {
    Engine::from_toml(text).unwrap()
}

#[test]
fn honest_four_node_route_delivers_after_three_hops() {
    let mut e = engine(&chain_toml(4, 2.9, &[], ""));
    e.run_to_horizon();
    let delivered = events(&e, "hop_forwarded").find(|r| r.payload["position"] == 3).unwrap();
    assert_eq!(delivered.tick, START_TICK + 3 * 580);
    assert_eq!(events(&e, "tx_succeeded").count(), 1);
    let report = e.metrics_report();
    assert!(report.culprits.is_empty());
    assert!(report.token_audit.conserved);
    assert_eq!(report.succeeded, 1);
}

#[test]
fn drop_at_hop_two_on_six_node_route() {
    let mut e = engine(&chain_toml(6, 2.9, &[(2, "{ drop_at_hop = 2 }")], ""));
    e.run_to_horizon();
    let failed = events(&e, "tx_failed").next().unwrap();
    let t_drop = START_TICK + 2 * 580;
    assert_eq!(failed.tick, t_drop + (6 - 1 - 2) * 580);
    assert_eq!(failed.payload["reason"], "timeout");
    let culprit = e.address_of("uav2").unwrap();
    assert_eq!(failed.payload["culprit"], culprit.to_string());
    assert!((failed.payload["detection_delay_s"].as_f64().unwrap() - 8.7).abs() < 1e-9);
}

#[test]
fn tamper_is_blamed_on_the_tamperer() {
    let mut e = engine(&chain_toml(7, 1.0, &[(4, "{ tamper_at_hop = { hop = 4, offset = 3, mask = 255 } }")], ""));
    e.run_to_horizon();
    let report = e.metrics_report();
    assert_eq!(report.failed, 1);
    let d = &report.detections[0];
    assert_eq!(name_of(&e, d.culprit), "uav4");
    assert_eq!(d.x, 4);
    assert_eq!(d.reason, uaanet::transaction::FailureReason::BadDecrypt);
}

#[test]
fn behaviour_acts_only_at_matching_position() {
    // uav2 sits at position 2; a drop keyed to position 3 never fires.
    let mut e = engine(&chain_toml(5, 1.0, &[(2, "{ drop_at_hop = 3 }")], ""));
    e.run_to_horizon();
    assert_eq!(e.metrics_report().succeeded, 1);
}

#[test]
fn constant_velocity_moves_exactly() {
    let text = "horizon_s = 2.0\n[[nodes]]\nname = \"a\"\nposition = [3.0, 4.0, 5.0]\nvelocity = [1.0, 0.0, -0.5]\n";
    let mut e = engine(text);
    let x0 = e.snapshot().nodes[0].x;
    for _ in 0..200 {
        e.advance();
    }
    let s = e.snapshot();
    assert_eq!(s.nodes[0].x - x0, 1.0);
    assert_eq!(s.nodes[0].z, 4.5);
    // A long idle skip lands on the same analytic position.
    e.run_until(200 + 200 * 3600);
    assert_eq!(e.snapshot().nodes[0].x, 3.0 + 1.0 + 3600.0);
}

#[test]
fn set_velocity_is_visible_in_the_next_snapshot() {
    let mut e = engine(&chain_toml(3, 1.0, &[], ""));
    e.submit(Command::SetVelocity { node: "uav1".into(), vx: 2.0, vy: 0.0, vz: 0.0 }).unwrap();
    let s = e.step();
    let n = s.nodes.iter().find(|n| n.name == "uav1").unwrap();
    assert_eq!(n.velocity, [2.0, 0.0, 0.0]);
    e.submit(Command::SetVelocity { node: "uav1".into(), vx: 0.0, vy: 0.0, vz: 0.0 }).unwrap();
    let before = e.step().nodes[1].x;
    for _ in 0..50 {
        e.advance();
    }
    assert_eq!(e.snapshot().nodes[1].x, before);
}

#[test]
fn steering_out_of_range_gives_no_route() {
    let text = chain_toml(3, 1.0, &[], "").replace("at_s = 1.0", "at_s = 5.0");
    let mut e = engine(&text);
    e.apply(Command::SetVelocity { node: "uav1".into(), vx: 0.0, vy: 50.0, vz: 0.0 }).unwrap();
    e.run_until(600);
    let err = e
        .apply(Command::StartTransaction { source: "src".into(), dest: "dst".into(), plaintext: "x".into() })
        .unwrap_err();
    assert!(matches!(err, EngineError::Transaction(TransactionError::Routing(_))), "{err}");
    assert_eq!(err.to_string(), "No route found");
    assert!(e.ledger().is_conserved());
    let uav1 = e.address_of("uav1").unwrap();
    assert_eq!(e.ledger().balance(&uav1).unwrap().milli(), 95_000);
}

#[test]
fn unknown_nodes_and_bad_values_are_rejected_before_enqueue() {
    let mut e = engine(&chain_toml(3, 1.0, &[], ""));
    let err = e.submit(Command::PayPenalty { node: "ghost".into() }).unwrap_err();
    assert!(matches!(err, EngineError::UnknownNode(ref n) if n == "ghost"));
    assert!(e.submit(Command::SetSpeed { multiplier: -1.0 }).is_err());
    assert!(e.submit(Command::SetVelocity { node: "uav1".into(), vx: f64::NAN, vy: 0.0, vz: 0.0 }).is_err());
    assert!(!e.has_pending());
}

#[test]
fn nodes_resolve_by_name_address_and_channel() {
    let e = engine(&chain_toml(3, 1.0, &[], ""));
    let a = e.address_of("uav1").unwrap();
    assert_eq!(e.resolve(&a.to_string()).unwrap(), 1);
    assert_eq!(e.resolve("8001").unwrap(), 1);
    assert_eq!(e.node("8000").unwrap().name, "src");
}

#[test]
fn colours_follow_the_transaction_lifecycle() {
    let mut e = engine(&chain_toml(4, 1.0, &[(1, "{ drop_at_hop = 1 }")], ""));
    e.run_until(START_TICK);
    run_to_idle(&mut e);
    let s = e.snapshot();
    let uav1 = s.nodes.iter().find(|n| n.name == "uav1").unwrap();
    assert_eq!(uav1.color_code, ColorCode::Red);
    assert!(uav1.faulty);
    assert!(s.links.iter().any(|l| l.style == uaanet::engine::LinkStyle::BlackDotted));
    let row = s.node_table.iter().find(|r| r.address == uav1.address).unwrap();
    assert_eq!((row.blacklist_count, row.penalty_token_meth, row.faulty_time_s), (1, 2000, 10));
    assert_eq!(row.balance_meth, 95_000 - 1000);

    e.apply(Command::PayPenalty { node: "uav1".into() }).unwrap();
    e.apply(Command::InjectBehavior { node: "uav1".into(), behavior: Behavior::Honest }).unwrap();
    let s = e.snapshot();
    assert_eq!(s.nodes[1].color_code, ColorCode::Black);
    assert_eq!(s.node_table.iter().find(|r| r.address == s.nodes[1].address).unwrap().balance_meth, 92_000);

    e.apply(Command::StartTransaction { source: "src".into(), dest: "dst".into(), plaintext: "again".into() }).unwrap();
    run_to_idle(&mut e);
    let s = e.snapshot();
    assert_eq!(s.nodes[3].color_code, ColorCode::Green);
    assert_eq!(s.nodes[0].color_code, ColorCode::Blue);
    assert!(s.links.iter().all(|l| l.style == uaanet::engine::LinkStyle::BlueDotted));
    assert_eq!(s.transaction.unwrap().status, "succeeded");
}

#[test]
fn late_penalty_payment_escalates() {
    let mut e = engine(&chain_toml(4, 1.0, &[(2, "{ drop_at_hop = 2 }")], ""));
    e.run_until(START_TICK);
    run_to_idle(&mut e);
    let uav2 = e.address_of("uav2").unwrap();
    e.run_until(e.tick() + ticks(10.0) + 1);
    let err = e.apply(Command::PayPenalty { node: "uav2".into() }).unwrap_err();
    assert!(matches!(err, EngineError::Registry(RegistryError::WindowLapsed { .. })));
    let r = e.registry().record(&uav2).unwrap();
    assert_eq!((r.penalty_token.milli(), r.fault_time.0), (4000, 100_000));
    assert_eq!(e.registry().blacklist_count(&uav2), 2);
    e.apply(Command::PayPenalty { node: "uav2".into() }).unwrap();
    assert!(!e.registry().record(&uav2).unwrap().faulty);
}

#[test]
fn only_a_gcs_may_abort() {
    let mut e = engine(&chain_toml(3, 1.0, &[], ""));
    assert!(matches!(
        e.apply(Command::Abort { gcs: "uav1".into() }),
        Err(EngineError::Transaction(TransactionError::NotGcs))
    ));
    e.run_until(START_TICK);
    assert!(!e.is_idle());
    e.apply(Command::Abort { gcs: "src".into() }).unwrap();
    assert!(e.is_idle());
    assert_eq!(e.metrics_report().aborted, 1);
    assert!(e.ledger().is_conserved());
    let uav1 = e.address_of("uav1").unwrap();
    assert_eq!(e.ledger().balance(&uav1).unwrap().milli(), 95_000);
}

#[test]
fn register_node_mid_run_and_duplicate_identity() {
    let mut e = engine(&chain_toml(3, 1.0, &[], ""));
    let spec = NodeSpec {
        name: "late".into(),
        is_gcs: false,
        position: [75.0, 60.0, 12.0],
        velocity: [0.0; 3],
        behavior: Behavior::Honest,
        key_seed: Some(77),
    };
    e.apply(Command::RegisterNode { spec: spec.clone() }).unwrap();
    assert_eq!(e.node("late").unwrap().channel_id, 8003);
    let err = e.apply(Command::RegisterNode { spec }).unwrap_err();
    assert!(matches!(err, EngineError::Registry(RegistryError::AlreadyRegistered(_))), "{err}");
}

#[test]
fn honest_delivery_never_times_out_under_jitter() {
    for seed in 0..25 {
        let text = chain_toml(9, 0.5, &[], &format!("jitter_s = 0.1\nseed = {seed}"));
        let mut e = engine(&text);
        e.run_to_horizon();
        let report = e.metrics_report();
        assert_eq!(report.succeeded, 1, "seed {seed}");
        assert_eq!(events(&e, "tx_failed").count(), 0);
    }
}

#[test]
fn identical_config_gives_identical_trace() {
    let text = include_str!("../scenarios/demo.toml");
    let run = || {
        let out = uaanet::engine::run_scenario(load_scenario(text).unwrap()).unwrap();
        uaanet::engine::trace::to_jsonl(&out.trace)
    };
    assert_eq!(run(), run());
    let mut other = load_scenario(text).unwrap();
    other.seed += 1;
    let changed = uaanet::engine::trace::to_jsonl(&uaanet::engine::run_scenario(other).unwrap().trace);
    assert_ne!(run(), changed);
}

#[test]
fn every_snapshot_of_the_demo_is_consistent() {
    let mut e = engine(include_str!("../scenarios/demo.toml"));
    let horizon = e.config().horizon_ticks();
    let mut seen = 0usize;
    while e.tick() < horizon {
        let s = e.step();
        s.check_consistency().unwrap();
        seen += s.events.len();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["v"], 1);
    }
    assert_eq!(seen, e.trace().len(), "snapshots together carry every event once");
    let report = e.metrics_report();
    assert_eq!((report.succeeded, report.failed, report.voided), (1, 2, 1));
    assert!(report.token_audit.conserved);
}

#[test]
fn bundled_scenarios_load() {
    for entry in std::fs::read_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let config = load_scenario(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        Engine::new(config).unwrap();
    }
}
