//! Serve a live session, connect two viewers over TCP, take the control
//! token with one of them and jog the gates, then replay the event log.
//!
//! ```bash
//! cargo run --example telemetry_server
//! ```
//!
//! To watch a session by hand instead, run
//! `cargo run --bin cyclone -- serve --scenario scenarios/nominal.toml`
//! and `nc 127.0.0.1 7878`.

use std::time::Duration;

use cyclone::controller::{ControllerConfig, Gate, ManualCommand, Mode};
use cyclone::plant::PlantConfig;
use cyclone::telemetry::server::connect_lines;
use cyclone::telemetry::wire::envelope_for;
use cyclone::telemetry::{replay, serve, Message, Pace, ServiceConfig};
use cyclone::twin::Twin;

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("session.jsonl");
    let config = ServiceConfig {
        listen: "127.0.0.1:0".into(),
        pace: Pace::RealTime { speed: 5.0 },
        wait_for_viewers: 2,
        duration_ms: Some(20_000),
        log_path: Some(log.clone()),
        ..Default::default()
    };
    let twin = Twin::new(ControllerConfig::default(), PlantConfig::default(), 1).unwrap();
    let service = serve(config, twin, Vec::new()).await.unwrap();
    println!("serving on {}", service.local_addr());

    let (mut operator, mut op_rx) = connect_lines(service.local_addr()).await.unwrap();
    let (mut watcher, mut watch_rx) = connect_lines(service.local_addr()).await.unwrap();

    let pause = || tokio::time::sleep(Duration::from_millis(300));
    let send = [
        ("w1", ManualCommand::SetMode(Mode::Manual), true),
        ("o1", ManualCommand::SetMode(Mode::Manual), false),
        ("o2", ManualCommand::Open(Gate::Upper), false),
        ("o3", ManualCommand::Open(Gate::Lower), false),
        ("o4", ManualCommand::Close(Gate::Upper), false),
    ];
    operator
        .send(&Message::Cmd(cyclone::telemetry::CommandEnvelope::new(
            "tok",
            "acquire_token",
        )))
        .await
        .unwrap();
    pause().await;
    for (id, cmd, from_watcher) in send {
        let env = Message::Cmd(envelope_for(id, cmd));
        if from_watcher {
            watcher.send(&env).await.unwrap();
        } else {
            operator.send(&env).await.unwrap();
        }
        pause().await;
    }
    operator.send_raw("this is not json").await.unwrap();

    let outcome = service.wait().await;
    println!(
        "session over: {} frames, {} commands, violations {:?}",
        outcome.frames_sent,
        outcome.commands_handled,
        outcome.twin.violations()
    );

    let mut frames_seen = 0;
    while let Some(line) = watch_rx.recv().await {
        match serde_json::from_str::<Message>(&line).unwrap() {
            Message::Frame(_) => frames_seen += 1,
            other => println!("watcher got  {}", other.to_line()),
        }
    }
    while let Some(line) = op_rx.recv().await {
        if !line.contains(r#""type":"frame""#) {
            println!("operator got {line}");
        }
    }
    let r = replay(&log).unwrap();
    println!(
        "watcher saw {frames_seen} frames; log replays {} frames",
        r.frames().count()
    );
}
