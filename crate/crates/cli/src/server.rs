//! WebSocket streaming server.
//!
//! A bridge thread copies every `BatchResult` from the runtime into a tokio
//! broadcast channel; each connection filters it by its subscribed channels.
//! A connection that falls more than [`CLIENT_QUEUE`] results behind is
//! told so and closed.

use std::collections::BTreeSet;
use std::future::Future;
use std::io;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::any;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use livesense_core::pipeline::source::SceneHandle;
use livesense_core::pipeline::{ControlHandle, Runtime, RuntimeStats};
use livesense_core::BatchResult;
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, watch};

use crate::protocol::{patch_entries, salvage_request_id, Axes, Channel, ClientMsg, ServerMsg};

/// Results a connection may lag behind before it is dropped.
pub const CLIENT_QUEUE: usize = 32;

/// Minimum spacing of `rdm` messages per connection.
pub const RDM_MIN_INTERVAL: Duration = Duration::from_millis(100);

pub struct Shared {
    control: ControlHandle,
    stats: Arc<RuntimeStats>,
    scene: Option<SceneHandle>,
    source: String,
    results: broadcast::Sender<Arc<BatchResult>>,
    finished: watch::Receiver<bool>,
}

impl Shared {
    /// Subscribes to `runtime` and starts the bridge thread. `scene` enables
    /// `set_scene` and should be given only for the simulator source.
    pub fn attach(runtime: &Runtime, scene: Option<SceneHandle>, source: &str) -> Arc<Self> {
        let rx = runtime.subscribe(4 * CLIENT_QUEUE);
        let (tx, _) = broadcast::channel(CLIENT_QUEUE);
        let (done_tx, done_rx) = watch::channel(false);
        let bridge_tx = tx.clone();
        std::thread::Builder::new()
            .name("ws-bridge".into())
            .spawn(move || {
                for r in rx {
                    // no receivers is fine
                    let _ = bridge_tx.send(r);
                }
                let _ = done_tx.send(true);
            })
            .expect("spawn bridge thread");
        Arc::new(Self {
            control: runtime.control(),
            stats: runtime.stats(),
            scene,
            source: source.to_string(),
            results: tx,
            finished: done_rx,
        })
    }

    /// Resolves once the runtime has delivered its last result.
    pub fn finished(&self) -> impl Future<Output = ()> + Send + 'static {
        let mut rx = self.finished.clone();
        async move {
            let _ = rx.wait_for(|done| *done).await;
        }
    }

    fn hello(&self, channels: &BTreeSet<Channel>) -> (ServerMsg, u64) {
        let (config, config_id) = self.control.active();
        let msg = ServerMsg::Hello {
            axes: Axes::of(&config),
            config,
            config_id,
            source: self.source.clone(),
            channels: channels.clone(),
        };
        (msg, config_id)
    }

    fn handle(&self, text: &str, channels: &mut BTreeSet<Channel>) -> ServerMsg {
        let msg: ClientMsg = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => return ServerMsg::error(salvage_request_id(text), format!("invalid message: {e}")),
        };
        let request_id = msg.request_id().clone();
        let patched = |patch: Vec<(String, String)>| match self.control.apply_patch(&patch) {
            Ok(id) => ServerMsg::Ack {
                request_id: request_id.clone(),
                config_id: Some(id),
            },
            Err(e) => ServerMsg::error(request_id.clone(), e.to_string()),
        };
        match msg {
            ClientMsg::SetConfig { patch, .. } => match patch_entries(&patch) {
                Ok(entries) => patched(entries),
                Err(e) => ServerMsg::error(request_id, e),
            },
            ClientMsg::SetMode { mode, .. } => patched(vec![("mode".into(), mode)]),
            ClientMsg::SetScene { scene, .. } => {
                let Some(handle) = &self.scene else {
                    return ServerMsg::error(request_id, "set_scene needs the simulator source");
                };
                match scene.into_scene() {
                    Ok(s) => {
                        handle.replace(s);
                        ServerMsg::Ack {
                            request_id,
                            config_id: None,
                        }
                    }
                    Err(e) => ServerMsg::error(request_id, e),
                }
            }
            ClientMsg::Subscribe { channels: wanted, .. } => {
                *channels = wanted;
                ServerMsg::Ack {
                    request_id,
                    config_id: None,
                }
            }
        }
    }
}

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new().route("/ws", any(upgrade)).with_state(shared)
}

/// Serves until `shutdown` resolves and every connection has closed.
pub async fn serve(
    listener: TcpListener,
    shared: Arc<Shared>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(shared)).with_graceful_shutdown(shutdown).await
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| session(socket, shared))
}

async fn session(socket: WebSocket, shared: Arc<Shared>) {
    let (mut tx, mut rx_ws) = socket.split();
    let mut results = shared.results.subscribe();
    let mut finished = Box::pin(shared.finished());
    let mut channels = Channel::defaults();
    let mut last_rdm: Option<Instant> = None;

    let (hello, mut hello_id) = shared.hello(&channels);
    if send(&mut tx, &hello).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            incoming = rx_ws.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                    Some(Ok(_)) => continue,
                };
                let reply = shared.handle(text.as_str(), &mut channels);
                if send(&mut tx, &reply).await.is_err() {
                    break;
                }
            }
            next = results.recv() => {
                let r = match next {
                    Ok(r) => r,
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        let msg = ServerMsg::error(Value::Null, format!("client fell {n} results behind; disconnecting"));
                        let _ = send(&mut tx, &msg).await;
                        break;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                };
                if r.config_id != hello_id {
                    let (hello, id) = shared.hello(&channels);
                    hello_id = id;
                    if send(&mut tx, &hello).await.is_err() {
                        break;
                    }
                }
                if publish(&mut tx, &shared, &r, &channels, &mut last_rdm).await.is_err() {
                    break;
                }
            }
            _ = &mut finished => {
                // drain what the bridge already queued
                while let Ok(r) = results.try_recv() {
                    if publish(&mut tx, &shared, &r, &channels, &mut last_rdm).await.is_err() {
                        break;
                    }
                }
                break;
            }
        }
    }
    let _ = tx.send(Message::Close(None)).await;
}

type Sink = futures_util::stream::SplitSink<WebSocket, Message>;

async fn send(tx: &mut Sink, msg: &ServerMsg) -> Result<(), axum::Error> {
    tx.send(Message::Text(msg.to_json().into())).await
}

async fn publish(
    tx: &mut Sink,
    shared: &Shared,
    r: &BatchResult,
    channels: &BTreeSet<Channel>,
    last_rdm: &mut Option<Instant>,
) -> Result<(), axum::Error> {
    for ch in channels {
        let msg = match ch {
            Channel::Rdm => {
                let now = Instant::now();
                if last_rdm.is_some_and(|t| now.duration_since(t) < RDM_MIN_INTERVAL) {
                    continue;
                }
                *last_rdm = Some(now);
                ServerMsg::rdm(r)
            }
            Channel::Targets => ServerMsg::targets(r),
            Channel::Tracks => ServerMsg::tracks(r),
            Channel::Vitals => ServerMsg::vitals(r),
            Channel::Stats => ServerMsg::stats(
                r,
                shared.stats.dropped_frames.load(Ordering::Relaxed),
                shared.stats.sampling_hz(),
            ),
            Channel::CsiStats => ServerMsg::csi_stats(r),
        };
        send(tx, &msg).await?;
    }
    Ok(())
}
