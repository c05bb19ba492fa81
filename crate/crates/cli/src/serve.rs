//! Live cutting session over WebSocket.
//!
//! One thread owns the [`CutSession`] and advances it at a fixed tick.
//! Connection tasks forward parsed commands to it over a channel and
//! receive pre-serialized state frames from a broadcast channel, so every
//! viewer gets byte-identical frames.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Result;
use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc as tmpsc};
use topocut_core::datagen::{generate_goal, GoalSpec};
use topocut_core::metrics::fps;
use topocut_core::mpm::KnifeCommand;
use topocut_core::scene::{twist_command, CutSession, ObjectSpec, SceneConfig};
use topocut_core::Vec3;

use crate::protocol::{ClientMessage, KnifeFrame, RewardFrame, ServerMessage, MAX_POINTS, UNASSIGNED};

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub tick: Duration,
    pub frames_per_tick: usize,
    /// Seed for goal point sampling.
    pub seed: u64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { tick: Duration::from_millis(50), frames_per_tick: 2, seed: 0 }
    }
}

type Reply = tmpsc::UnboundedSender<Utf8Bytes>;

enum Inbound {
    Command { client: u64, msg: ClientMessage, reply: Reply },
    Disconnect(u64),
}

/// Everything the sim thread owns.
struct Live {
    base: SceneConfig,
    seed: u64,
    session: CutSession,
    goal: Vec<Vec3>,
    reward: RewardFrame,
    sample: Vec<usize>,
    twist: [f32; 6],
    controller: Option<u64>,
    tick: u64,
}

impl Live {
    fn new(base: SceneConfig, seed: u64) -> Result<Self> {
        let session = CutSession::new(base.clone())?;
        let goal = generate_goal(&base.goal, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut live = Self {
            base,
            seed,
            session,
            goal,
            reward: RewardFrame { r_total: 0.0, n_c: 0 },
            sample: Vec::new(),
            twist: [0.0; 6],
            controller: None,
            tick: 0,
        };
        live.resample();
        live.rescore()?;
        Ok(live)
    }

    fn resample(&mut self) {
        let n = self.session.sim.particles.len();
        self.sample = if n <= MAX_POINTS { (0..n).collect() } else { fps(&self.session.sim.particles.positions(), MAX_POINTS) };
    }

    fn rescore(&mut self) -> Result<()> {
        let e = self.session.evaluate(&self.goal)?;
        self.reward = RewardFrame { r_total: e.r_total, n_c: e.n_c };
        Ok(())
    }

    fn reset(&mut self, object: ObjectSpec) -> Result<()> {
        let cfg = SceneConfig { object, ..self.base.clone() };
        self.session = CutSession::new(cfg)?;
        self.twist = [0.0; 6];
        self.resample();
        self.rescore()
    }

    fn set_goal(&mut self, spec: GoalSpec) -> Result<()> {
        spec.validate().map_err(anyhow::Error::msg)?;
        self.goal = generate_goal(&spec, &mut ChaCha8Rng::seed_from_u64(self.seed));
        self.session.config.goal = spec;
        self.rescore()
    }

    fn handle(&mut self, client: u64, msg: ClientMessage) -> Option<ServerMessage> {
        if msg == ClientMessage::ClaimControl {
            let granted = self.controller.is_none_or(|c| c == client);
            if granted {
                self.controller = Some(client);
            }
            return Some(ServerMessage::Control { granted });
        }
        if self.controller != Some(client) {
            return Some(ServerMessage::error("claim control before sending commands"));
        }
        let result = match msg {
            ClientMessage::Twist { v, w } => {
                if v.iter().chain(&w).all(|x| x.is_finite()) {
                    self.twist = [v[0], v[1], v[2], w[0], w[1], w[2]];
                    Ok(())
                } else {
                    Err(anyhow::anyhow!("twist components must be finite"))
                }
            }
            ClientMessage::CutCommit => {
                self.twist = [0.0; 6];
                self.session.finish_cut().map_err(anyhow::Error::from).and_then(|_| self.rescore())
            }
            ClientMessage::Reset { object } => self.reset(*object),
            ClientMessage::Goal { spec } => self.set_goal(spec),
            ClientMessage::ClaimControl => unreachable!(),
        };
        result.err().map(|e| ServerMessage::error(e.to_string()))
    }

    fn advance(&mut self, frames: usize) -> Result<()> {
        let cmd = if self.twist == [0.0; 6] { KnifeCommand::zero() } else { twist_command(&self.twist) };
        for _ in 0..frames {
            self.session.step(&cmd)?;
        }
        Ok(())
    }

    fn frame(&mut self) -> ServerMessage {
        self.tick += 1;
        let ps = &self.session.sim.particles.particles;
        let points = self.sample.iter().map(|&i| ps[i].x.map(|c| c as f32).into()).collect();
        let clusters = self.sample.iter().map(|&i| u8::try_from(ps[i].cluster_id).unwrap_or(UNASSIGNED)).collect();
        let pose = self.session.sim.knife.pose;
        let q = pose.rotation.into_inner();
        ServerMessage::State {
            tick: self.tick,
            points,
            clusters,
            knife: KnifeFrame { pos: pose.position.into(), quat: [q.i, q.j, q.k, q.w] },
            reward: self.reward.clone(),
        }
    }
}

fn sim_loop(mut live: Live, rx: mpsc::Receiver<Inbound>, frames: broadcast::Sender<Utf8Bytes>, opts: ServeOptions) {
    let mut next = Instant::now();
    loop {
        loop {
            match rx.try_recv() {
                Ok(Inbound::Command { client, msg, reply }) => {
                    if let Some(out) = live.handle(client, msg) {
                        let _ = reply.send(out.to_json().into());
                    }
                }
                Ok(Inbound::Disconnect(client)) => {
                    if live.controller == Some(client) {
                        live.controller = None;
                    }
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        }
        if let Err(e) = live.advance(opts.frames_per_tick) {
            log::error!("simulation failed, resetting: {e}");
            let _ = frames.send(ServerMessage::error(format!("simulation failed and was reset: {e}")).to_json().into());
            let object = live.session.config.object.clone();
            if let Err(e) = live.reset(object) {
                log::error!("reset failed: {e}");
                return;
            }
        }
        // No receivers is fine; frames are dropped until someone connects.
        let _ = frames.send(live.frame().to_json().into());
        next += opts.tick;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }
}

#[derive(Clone)]
struct Shared {
    commands: mpsc::Sender<Inbound>,
    frames: broadcast::Sender<Utf8Bytes>,
    next_id: Arc<AtomicU64>,
}

impl Shared {
    fn send(&self, m: Inbound) {
        let _ = self.commands.send(m);
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> Response {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(socket: WebSocket, shared: Shared) {
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
    log::info!("client {id} connected");
    let (mut sink, mut stream) = socket.split();
    let mut frames = shared.frames.subscribe();
    let (reply, mut replies) = tmpsc::unbounded_channel::<Utf8Bytes>();
    let writer = tokio::spawn(async move {
        loop {
            let text = tokio::select! {
                r = replies.recv() => match r {
                    Some(t) => t,
                    None => break,
                },
                f = frames.recv() => match f {
                    Ok(t) => t,
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        log::debug!("client skipped {n} frames");
                        continue;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            if sink.send(Message::Text(text)).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(t) => match serde_json::from_str::<ClientMessage>(t.as_str()) {
                Ok(msg) => shared.send(Inbound::Command { client: id, msg, reply: reply.clone() }),
                Err(e) => {
                    let _ = reply.send(ServerMessage::error(format!("malformed message: {e}")).to_json().into());
                }
            },
            Message::Binary(_) => {
                let _ = reply.send(ServerMessage::error("binary frames are not supported").to_json().into());
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    shared.send(Inbound::Disconnect(id));
    writer.abort();
    log::info!("client {id} disconnected");
}

/// Serves `/ws` on `listener` until the task is dropped.
pub async fn serve(listener: TcpListener, config: SceneConfig, opts: ServeOptions) -> Result<()> {
    let live = Live::new(config, opts.seed)?;
    let (tx, rx) = mpsc::channel();
    let (frames, _) = broadcast::channel(16);
    let shared = Shared { commands: tx, frames: frames.clone(), next_id: Arc::new(AtomicU64::new(0)) };
    thread::Builder::new().name("sim".into()).spawn(move || sim_loop(live, rx, frames, opts))?;
    let app = Router::new().route("/ws", get(upgrade)).with_state(shared);
    log::info!("listening on ws://{}/ws", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
