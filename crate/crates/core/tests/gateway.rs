mod common;

use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio_tungstenite::tungstenite::Message;
use uaanet::engine::Engine;
use uaanet::gateway::server::{self, Frame, ServerConfig, ServerMessage};
use uaanet::registry::NodeTableRow;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn start(speed: f64) -> server::ServerHandle {
    let text = common::chain_toml(3, 0.2, &[], "").replace("at_s = 1.0", "at_s = 100000.0");
    let engine = Engine::from_toml(&text).unwrap();
    server::spawn(engine, ServerConfig { port: 0, speed, ..ServerConfig::default() })
        .await
        .unwrap()
}

async fn next_frame(ws: &mut Ws) -> Frame {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("frame within timeout")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = msg {
            let raw: Value = serde_json::from_str(&t).unwrap();
            assert_eq!(raw["v"], 1, "every frame is versioned");
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Next reply to a client frame.
async fn next_reply(ws: &mut Ws) -> ServerMessage {
    loop {
        let f = next_frame(ws).await;
        if !matches!(f.body, ServerMessage::Snapshot { .. } | ServerMessage::Hello { .. }) {
            return f.body;
        }
    }
}

async fn send(ws: &mut Ws, value: Value) {
    ws.send(Message::Text(value.to_string())).await.unwrap();
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> (u16, String) {
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    let request = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    stream.write_all(request.as_bytes()).await.unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).await.unwrap();
    let status = response[9..12].parse().unwrap();
    let body = response.split_once("\r\n\r\n").unwrap().1.to_owned();
    (status, body)
}

#[tokio::test(flavor = "multi_thread")]
async fn snapshot_stream_and_commands() {
    let handle = start(1.0).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/ws", handle.addr)).await.unwrap();

    match next_frame(&mut ws).await.body {
        ServerMessage::Hello { tick_ms, channels } => {
            assert_eq!(tick_ms, 5);
            let ids: Vec<u32> = channels.iter().map(|c| c.channel_id).collect();
            assert_eq!(ids, vec![8000, 8001, 8002]);
        }
        other => panic!("expected hello, got {other:?}"),
    }
    let ServerMessage::Snapshot { snapshot } = next_frame(&mut ws).await.body else {
        panic!("expected a snapshot")
    };
    snapshot.check_consistency().unwrap();
    assert_eq!(snapshot.nodes.len(), 3);

    send(&mut ws, json!({"v": 1, "seq": 1, "command": {"type": "set_velocity", "node": "uav1", "vx": 1.5, "vy": 0, "vz": 0}})).await;
    let ack_tick = match next_reply(&mut ws).await {
        ServerMessage::Ack { seq, tick } => {
            assert_eq!(seq, Some(1));
            tick
        }
        other => panic!("expected ack, got {other:?}"),
    };
    loop {
        let ServerMessage::Snapshot { snapshot } = next_frame(&mut ws).await.body else { continue };
        if snapshot.tick > ack_tick {
            let uav1 = snapshot.nodes.iter().find(|n| n.name == "uav1").unwrap();
            assert_eq!(uav1.velocity, [1.5, 0.0, 0.0]);
            assert!(snapshot.events.iter().any(|e| e.event_type == "velocity_set") || uav1.x > 75.0);
            break;
        }
    }

    // Unknown node: error frame, connection stays usable.
    send(&mut ws, json!({"v": 1, "seq": 2, "command": {"type": "pay_penalty", "node": "nobody"}})).await;
    match next_reply(&mut ws).await {
        ServerMessage::Error { seq, reason } => {
            assert_eq!(seq, Some(2));
            assert!(reason.contains("nobody"), "{reason}");
        }
        other => panic!("expected error, got {other:?}"),
    }
    ws.send(Message::Text("not json".into())).await.unwrap();
    assert!(matches!(next_reply(&mut ws).await, ServerMessage::Error { seq: None, .. }));
    send(&mut ws, json!({"v": 1, "seq": 3, "command": {"type": "warp"}})).await;
    assert!(matches!(next_reply(&mut ws).await, ServerMessage::Error { seq: Some(3), .. }));

    // Ordered acks for a burst of commands.
    for seq in 10..15u64 {
        let command = if seq % 2 == 0 { json!({"type": "pause"}) } else { json!({"type": "resume"}) };
        send(&mut ws, json!({"v": 1, "seq": seq, "command": command})).await;
    }
    for expected in 10..15u64 {
        match next_reply(&mut ws).await {
            ServerMessage::Ack { seq, .. } => assert_eq!(seq, Some(expected)),
            other => panic!("expected ack, got {other:?}"),
        }
    }

    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn pause_stops_the_clock_and_resume_restarts_it() {
    let handle = start(1.0).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/ws", handle.addr)).await.unwrap();
    send(&mut ws, json!({"v": 1, "seq": 1, "command": {"type": "pause"}})).await;
    assert!(matches!(next_reply(&mut ws).await, ServerMessage::Ack { .. }));
    let paused_snapshot = loop {
        if let ServerMessage::Snapshot { snapshot } = next_frame(&mut ws).await.body {
            if snapshot.paused {
                break snapshot;
            }
        }
    };
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, body) = http_get(handle.addr, "/snapshot").await;
    let now: uaanet::engine::Snapshot = serde_json::from_str(&body).unwrap();
    assert!(now.paused);
    assert_eq!(now.tick, paused_snapshot.tick);

    send(&mut ws, json!({"v": 1, "seq": 2, "command": {"type": "resume"}})).await;
    assert!(matches!(next_reply(&mut ws).await, ServerMessage::Ack { .. }));
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, body) = http_get(handle.addr, "/snapshot").await;
    let later: uaanet::engine::Snapshot = serde_json::from_str(&body).unwrap();
    assert!(!later.paused);
    assert!(later.tick > now.tick);
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn node_table_endpoint_matches_ledger() {
    let handle = start(1.0).await;
    let (status, body) = http_get(handle.addr, "/nodes").await;
    assert_eq!(status, 200);
    let rows: Vec<NodeTableRow> = serde_json::from_str(&body).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row.balance_meth, 95_000);
        assert_eq!((row.blacklist_count, row.faulty_time_s, row.penalty_token_meth), (0, 0, 0));
    }
    let raw: Vec<Value> = serde_json::from_str(&body).unwrap();
    let mut keys: Vec<&String> = raw[0].as_object().unwrap().keys().collect();
    keys.sort();
    assert_eq!(keys, ["address", "balance_meth", "blacklist_count", "faulty_time_s", "penalty_token_meth"]);
    let (status, body) = http_get(handle.addr, "/channels").await;
    assert_eq!(status, 200);
    assert!(body.contains("8002"));
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn live_transaction_is_observed_on_the_stream() {
    let handle = start(8.0).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/ws", handle.addr)).await.unwrap();
    send(&mut ws, json!({"v": 1, "seq": 1, "command": {"type": "start_transaction", "source": "src", "dest": "dst", "plaintext": "hi"}})).await;
    assert!(matches!(next_reply(&mut ws).await, ServerMessage::Ack { .. }));
    let mut saw_forward = false;
    let mut last_tick = 0;
    loop {
        let ServerMessage::Snapshot { snapshot } = next_frame(&mut ws).await.body else { continue };
        snapshot.check_consistency().unwrap();
        assert!(snapshot.tick > last_tick, "snapshots advance");
        last_tick = snapshot.tick;
        saw_forward |= snapshot.events.iter().any(|e| e.event_type == "hop_forwarded");
        if snapshot.events.iter().any(|e| e.event_type == "tx_succeeded") {
            let dst = snapshot.nodes.iter().find(|n| n.name == "dst").unwrap();
            assert_eq!(dst.color_code, uaanet::engine::ColorCode::Green);
            break;
        }
    }
    assert!(saw_forward);
    handle.shutdown().await;
}
