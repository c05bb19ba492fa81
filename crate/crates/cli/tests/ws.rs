use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};
use topocut::protocol::{ClientMessage, ServerMessage, UNASSIGNED};
use topocut::serve::{serve, ServeOptions};
use topocut_core::mpm::Shape;
use topocut_core::scene::{ObjectSpec, SceneConfig};
use topocut_core::spectral::SpectralConfig;

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn scene() -> SceneConfig {
    let mut cfg = SceneConfig::default();
    cfg.object = ObjectSpec { shape: Shape::Box { half_extents: [0.05, 0.03, 0.05] }, ..ObjectSpec::default() };
    cfg.spectral = SpectralConfig { num_point: 128, knn_k: 10, k_eig: 6, ..SpectralConfig::default() };
    cfg.knife.park_height = 0.25;
    cfg.sim.damping = 10.0;
    cfg
}

async fn start() -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let opts = ServeOptions { tick: Duration::from_millis(5), frames_per_tick: 4, seed: 0 };
    tokio::spawn(serve(listener, scene(), opts));
    addr
}

async fn connect(addr: SocketAddr) -> Socket {
    connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn send(ws: &mut Socket, msg: &ClientMessage) {
    ws.send(Message::Text(serde_json::to_string(msg).unwrap().into())).await.unwrap();
}

async fn next_raw(ws: &mut Socket) -> String {
    let msg = tokio::time::timeout(Duration::from_secs(60), ws.next()).await.expect("no frame within 60 s").unwrap().unwrap();
    msg.into_text().unwrap().to_string()
}

async fn next(ws: &mut Socket) -> ServerMessage {
    serde_json::from_str(&next_raw(ws).await).unwrap()
}

/// Next message that is not a state frame.
async fn next_reply(ws: &mut Socket) -> ServerMessage {
    loop {
        let m = next(ws).await;
        if !matches!(m, ServerMessage::State { .. }) {
            return m;
        }
    }
}

fn labels(m: &ServerMessage) -> Vec<u8> {
    let ServerMessage::State { clusters, .. } = m else { panic!("not a state frame") };
    let mut ids: Vec<u8> = clusters.iter().copied().filter(|&c| c != UNASSIGNED).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn state_frames_follow_the_schema_with_increasing_ticks() {
    let addr = start().await;
    let mut ws = connect(addr).await;
    let raw = next_raw(&mut ws).await;
    let v: Value = serde_json::from_str(&raw).unwrap();
    assert_eq!(v["type"], "state");
    for key in ["tick", "points", "clusters", "knife", "reward"] {
        assert!(v.get(key).is_some(), "{key} missing from {}", &raw[..200.min(raw.len())]);
    }
    assert_eq!(v["knife"]["pos"].as_array().unwrap().len(), 3);
    assert_eq!(v["knife"]["quat"].as_array().unwrap().len(), 4);
    assert!(v["reward"]["R_total"].is_f64() && v["reward"]["N_C"].is_u64());
    let n = v["points"].as_array().unwrap().len();
    assert!(n > 0 && n <= 8192);
    assert_eq!(v["clusters"].as_array().unwrap().len(), n);
    let mut last = v["tick"].as_u64().unwrap();
    for _ in 0..20 {
        let ServerMessage::State { tick, .. } = next(&mut ws).await else { panic!() };
        assert!(tick > last);
        last = tick;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn idle_session_stays_at_rest() {
    let addr = start().await;
    let mut ws = connect(addr).await;
    let points = |m: ServerMessage| match m {
        ServerMessage::State { points, .. } => points,
        _ => panic!(),
    };
    for _ in 0..60 {
        next(&mut ws).await;
    }
    let a = points(next(&mut ws).await);
    for _ in 0..10 {
        next(&mut ws).await;
    }
    let b = points(next(&mut ws).await);
    let moved = a.iter().zip(&b).map(|(p, q)| (0..3).map(|i| (p[i] - q[i]).abs()).fold(0.0, f32::max)).fold(0.0, f32::max);
    assert!(moved < 1e-4, "{moved}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_descent_and_commit_split_the_object() {
    let addr = start().await;
    let mut ws = connect(addr).await;
    send(&mut ws, &ClientMessage::ClaimControl).await;
    assert_eq!(next_reply(&mut ws).await, ServerMessage::Control { granted: true });
    let before = labels(&next(&mut ws).await);
    assert_eq!(before, vec![0]);

    let floor = scene().sim.floor_height() - scene().sim.dx();
    send(&mut ws, &ClientMessage::Twist { v: [0.0, -0.5, 0.0], w: [0.0; 3] }).await;
    loop {
        let ServerMessage::State { knife, .. } = next(&mut ws).await else { continue };
        if knife.pos[1] - scene().knife.half_height < floor {
            break;
        }
    }
    send(&mut ws, &ClientMessage::Twist { v: [0.0; 3], w: [0.0; 3] }).await;
    send(&mut ws, &ClientMessage::CutCommit).await;
    // The commit lands between two ticks; the frame after it shows the split.
    let mut ids = Vec::new();
    for _ in 0..20 {
        let m = next(&mut ws).await;
        ids = labels(&m);
        if ids.len() >= 2 {
            let ServerMessage::State { reward, .. } = m else { unreachable!() };
            assert!(reward.r_total.is_finite());
            break;
        }
    }
    assert!(ids.len() >= 2, "{ids:?}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn viewers_receive_identical_frames() {
    let addr = start().await;
    let mut a = connect(addr).await;
    let mut b = connect(addr).await;
    let tick = |s: &str| serde_json::from_str::<Value>(s).unwrap()["tick"].as_u64().unwrap();
    let mut fa = vec![next_raw(&mut a).await];
    let mut fb = vec![next_raw(&mut b).await];
    // Align on a common tick.
    while tick(&fa[0]) < tick(&fb[0]) {
        fa[0] = next_raw(&mut a).await;
    }
    while tick(&fb[0]) < tick(&fa[0]) {
        fb[0] = next_raw(&mut b).await;
    }
    for _ in 0..10 {
        fa.push(next_raw(&mut a).await);
        fb.push(next_raw(&mut b).await);
    }
    assert_eq!(fa, fb);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn control_is_exclusive_and_errors_do_not_end_the_session() {
    let addr = start().await;
    let mut owner = connect(addr).await;
    let mut other = connect(addr).await;
    send(&mut owner, &ClientMessage::ClaimControl).await;
    assert_eq!(next_reply(&mut owner).await, ServerMessage::Control { granted: true });
    send(&mut other, &ClientMessage::ClaimControl).await;
    assert_eq!(next_reply(&mut other).await, ServerMessage::Control { granted: false });
    send(&mut other, &ClientMessage::CutCommit).await;
    assert!(matches!(next_reply(&mut other).await, ServerMessage::Error { .. }));

    other.send(Message::Text("{\"type\": \"warp\"}".into())).await.unwrap();
    let ServerMessage::Error { message } = next_reply(&mut other).await else { panic!() };
    assert!(message.contains("malformed"), "{message}");
    other.send(Message::Text("not json".into())).await.unwrap();
    assert!(matches!(next_reply(&mut other).await, ServerMessage::Error { .. }));
    let bad_goal = json!({"type": "goal", "spec": {"kind": "dice", "dims": [0.1, 0.01, 0.1], "sample_count": 10}});
    owner.send(Message::Text(bad_goal.to_string().into())).await.unwrap();
    assert!(matches!(next_reply(&mut owner).await, ServerMessage::Error { .. }));
    assert!(matches!(next(&mut other).await, ServerMessage::State { .. }));

    // Control passes on when the owner leaves.
    owner.close(None).await.unwrap();
    drop(owner);
    let mut granted = false;
    for _ in 0..50 {
        send(&mut other, &ClientMessage::ClaimControl).await;
        if next_reply(&mut other).await == (ServerMessage::Control { granted: true }) {
            granted = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert!(granted);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn reset_and_goal_update_the_session() {
    let addr = start().await;
    let mut ws = connect(addr).await;
    send(&mut ws, &ClientMessage::ClaimControl).await;
    next_reply(&mut ws).await;
    let small = ObjectSpec { shape: Shape::Box { half_extents: [0.03, 0.03, 0.03] }, ..ObjectSpec::default() };
    let n_before = match next(&mut ws).await {
        ServerMessage::State { points, .. } => points.len(),
        _ => unreachable!(),
    };
    send(&mut ws, &ClientMessage::Reset { object: Box::new(small) }).await;
    let mut shrunk = false;
    for _ in 0..20 {
        if let ServerMessage::State { points, .. } = next(&mut ws).await {
            if points.len() < n_before {
                shrunk = true;
                break;
            }
        }
    }
    assert!(shrunk);
    let goal = json!({"type": "goal", "spec": {"kind": "dice", "dims": [0.06, 0.06, 0.06], "sample_count": 216}});
    ws.send(Message::Text(goal.to_string().into())).await.unwrap();
    for _ in 0..5 {
        assert!(matches!(next(&mut ws).await, ServerMessage::State { .. }));
    }
}
