//! Live session host. One task owns the session and ticks it on the wall
//! clock; connection tasks and background work only post events to it.

use std::collections::HashMap;
use std::fs::File;
use std::future::Future;
use std::io::BufWriter;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::SinkExt;
use teleassist::affordance::AffordanceSnapshot;
use teleassist::scenesim::SceneDescription;
use teleassist::session::trace::TraceWriter;
use teleassist::session::{run_work, FrameView, Session, SessionConfig, SessionEvent, WorkResult};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};

use crate::protocol::{ClientMessage, ErrorCode, ServerMessage, PROTOCOL_VERSION};

/// Latest published state; connections read it latest-wins.
#[derive(Clone, Debug)]
struct Published {
    frame: FrameView,
    snapshot: Arc<AffordanceSnapshot>,
}

enum Inbox {
    Event(SessionEvent),
    Work(u64, WorkResult),
}

#[derive(Clone)]
struct Shared {
    inbox: mpsc::UnboundedSender<Inbox>,
    frames: watch::Receiver<Published>,
    connected: Arc<AtomicBool>,
    scene: Arc<SceneDescription>,
    config: Arc<SessionConfig>,
}

/// Summary returned when the host shuts down.
#[derive(Clone, Debug)]
pub struct HostReport {
    pub ticks: u64,
    pub final_checksum: String,
}

/// Serves `session` on `listener` until `shutdown` resolves, recording
/// every applied event to `trace` when given.
pub async fn serve(
    listener: TcpListener,
    session: Session,
    trace: Option<TraceWriter<BufWriter<File>>>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<HostReport> {
    let (inbox_tx, inbox_rx) = mpsc::unbounded_channel();
    let (frames_tx, frames_rx) =
        watch::channel(Published { frame: session.frame_view(), snapshot: session.snapshot().clone() });
    let shared = Shared {
        inbox: inbox_tx.clone(),
        frames: frames_rx,
        connected: Arc::new(AtomicBool::new(false)),
        scene: Arc::new(session.scene().clone()),
        config: Arc::new(session.config().clone()),
    };
    let (stop_tx, stop_rx) = watch::channel(false);
    let app = Router::new().route("/session", get(upgrade)).with_state(shared);
    let server = tokio::spawn(async move {
        let mut stop = stop_rx;
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = stop.wait_for(|s| *s).await;
            })
            .await
    });
    let report = run_loop(session, trace, inbox_tx, inbox_rx, frames_tx, shutdown).await;
    let _ = stop_tx.send(true);
    server.await??;
    report
}

async fn run_loop(
    mut session: Session,
    mut trace: Option<TraceWriter<BufWriter<File>>>,
    inbox_tx: mpsc::UnboundedSender<Inbox>,
    mut inbox: mpsc::UnboundedReceiver<Inbox>,
    frames: watch::Sender<Published>,
    shutdown: impl Future<Output = ()>,
) -> anyhow::Result<HostReport> {
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(session.dt()));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut results: HashMap<u64, WorkResult> = HashMap::new();
    let mut cancels: HashMap<u64, Arc<AtomicBool>> = HashMap::new();
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            _ = ticker.tick() => {}
        }
        let mut batch = Vec::new();
        while let Ok(item) = inbox.try_recv() {
            match item {
                Inbox::Event(e) => batch.push(e),
                Inbox::Work(id, result) => {
                    cancels.remove(&id);
                    results.insert(id, result);
                    batch.push(SessionEvent::WorkDone { id });
                }
            }
        }
        batch.push(SessionEvent::Tick);
        for event in batch {
            let mut resolve = |id: u64, _: &_| results.remove(&id).expect("work result was delivered");
            let step = session.handle(&event, &mut resolve)?;
            if let SessionEvent::WorkDone { id } = event {
                results.remove(&id);
            }
            if let Some(t) = &mut trace {
                t.record(std::slice::from_ref(&event), &session)?;
            }
            for id in step.cancelled {
                if let Some(flag) = cancels.remove(&id) {
                    flag.store(true, Ordering::Release);
                }
            }
            for (id, request) in step.requests {
                let flag = Arc::new(AtomicBool::new(false));
                cancels.insert(id, flag.clone());
                let ctx = session.work_context();
                let tx = inbox_tx.clone();
                tokio::task::spawn_blocking(move || {
                    let result = run_work(&ctx, &request, Some(&flag));
                    if !flag.load(Ordering::Acquire) {
                        let _ = tx.send(Inbox::Work(id, result));
                    }
                });
            }
        }
        frames.send_replace(Published { frame: session.frame_view(), snapshot: session.snapshot().clone() });
    }
    for flag in cancels.values() {
        flag.store(true, Ordering::Release);
    }
    if let Some(t) = trace {
        t.finish(&session)?;
    }
    Ok(HostReport { ticks: session.tick(), final_checksum: session.checksum() })
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

fn encode(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("serializable message").into())
}

async fn connection(mut socket: WebSocket, shared: Shared) {
    let mut seq = 0u64;
    let mut next = || {
        seq += 1;
        seq
    };
    if shared.connected.swap(true, Ordering::AcqRel) {
        let msg = ServerMessage::Error {
            seq: next(),
            code: ErrorCode::Busy,
            detail: "a cockpit is already connected".into(),
        };
        let _ = socket.send(encode(&msg)).await;
        let _ = socket.close().await;
        return;
    }
    let result = run_connection(&mut socket, &shared, &mut next).await;
    if let Err(e) = result {
        tracing::debug!("connection ended: {e}");
    }
    shared.connected.store(false, Ordering::Release);
}

async fn run_connection(socket: &mut WebSocket, shared: &Shared, next: &mut impl FnMut() -> u64) -> anyhow::Result<()> {
    // Handshake: the first text message must be a Hello with our version.
    loop {
        let Some(msg) = socket.recv().await else { return Ok(()) };
        let Message::Text(text) = msg? else { continue };
        match serde_json::from_str::<ClientMessage>(&text) {
            Ok(ClientMessage::Hello { version }) if version == PROTOCOL_VERSION => break,
            Ok(ClientMessage::Hello { version }) => {
                let detail = format!("server speaks version {PROTOCOL_VERSION}, client sent {version}");
                socket
                    .send(encode(&ServerMessage::Error { seq: next(), code: ErrorCode::VersionMismatch, detail }))
                    .await?;
                socket.close().await?;
                return Ok(());
            }
            Ok(_) => {
                let detail = "expected hello".to_string();
                socket.send(encode(&ServerMessage::Error { seq: next(), code: ErrorCode::BadMessage, detail })).await?;
            }
            Err(e) => {
                socket
                    .send(encode(&ServerMessage::Error {
                        seq: next(),
                        code: ErrorCode::BadMessage,
                        detail: e.to_string(),
                    }))
                    .await?;
            }
        }
    }
    let init = ServerMessage::SessionInit {
        seq: next(),
        version: PROTOCOL_VERSION,
        scene: (*shared.scene).clone(),
        config: (*shared.config).clone(),
    };
    socket.send(encode(&init)).await?;

    let mut frames = shared.frames.clone();
    frames.mark_changed();
    let mut sent_revision = None;
    let mut last_client_seq = 0u64;
    loop {
        tokio::select! {
            changed = frames.changed() => {
                if changed.is_err() {
                    return Ok(());
                }
                let published = frames.borrow_and_update().clone();
                let revision = published.snapshot.revision;
                let snapshot = (sent_revision != Some(revision)).then(|| published.snapshot.clone());
                sent_revision = Some(revision);
                socket.send(encode(&ServerMessage::Frame { seq: next(), frame: published.frame, snapshot })).await?;
            }
            msg = socket.recv() => {
                let Some(msg) = msg else { return Ok(()) };
                let text = match msg? {
                    Message::Text(t) => t,
                    Message::Close(_) => return Ok(()),
                    _ => continue,
                };
                let (seq, event) = match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(ClientMessage::InputState { seq, input }) => (seq, SessionEvent::Input { input }),
                    Ok(ClientMessage::SelectItem { seq, id }) => (seq, SessionEvent::Select { item: id }),
                    Ok(ClientMessage::Hello { .. }) => {
                        let detail = "already greeted".to_string();
                        socket.send(encode(&ServerMessage::Error { seq: next(), code: ErrorCode::BadMessage, detail })).await?;
                        continue;
                    }
                    Err(e) => {
                        socket.send(encode(&ServerMessage::Error { seq: next(), code: ErrorCode::BadMessage, detail: e.to_string() })).await?;
                        continue;
                    }
                };
                if seq <= last_client_seq {
                    let detail = format!("sequence {seq} after {last_client_seq}");
                    socket.send(encode(&ServerMessage::Error { seq: next(), code: ErrorCode::OutOfOrder, detail })).await?;
                    continue;
                }
                last_client_seq = seq;
                if shared.inbox.send(Inbox::Event(event)).is_err() {
                    return Ok(());
                }
            }
        }
    }
}
