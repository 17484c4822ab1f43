use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::oneshot;

use crate::TelemetryHub;

/// Minimum gap between frames on `/stream`.
pub const STREAM_INTERVAL: Duration = Duration::from_millis(100);
const BOUNDARY: &str = "frame";
const INDEX_HTML: &str = include_str!("../assets/index.html");

fn no_data() -> Response {
    (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"status": "no data"}))).into_response()
}

async fn status(State(hub): State<Arc<TelemetryHub>>) -> Response {
    match hub.latest() {
        Some(s) => Json(&*s).into_response(),
        None => no_data(),
    }
}

async fn frame(State(hub): State<Arc<TelemetryHub>>) -> Response {
    match hub.latest().and_then(|s| s.frame.clone()) {
        Some(png) => ([(header::CONTENT_TYPE, "image/png")], (*png).clone()).into_response(),
        None => no_data(),
    }
}

fn part(png: &[u8]) -> Bytes {
    let mut out = format!("--{BOUNDARY}\r\nContent-Type: image/png\r\nContent-Length: {}\r\n\r\n", png.len()).into_bytes();
    out.extend_from_slice(png);
    out.extend_from_slice(b"\r\n");
    Bytes::from(out)
}

async fn stream(State(hub): State<Arc<TelemetryHub>>) -> Response {
    // emits a part whenever a new frame has been published since the last one
    let frames = futures::stream::unfold(None::<Arc<Vec<u8>>>, move |last| {
        let hub = hub.clone();
        async move {
            loop {
                if let Some(f) = hub.latest().and_then(|s| s.frame.clone()) {
                    if last.as_ref().map_or(true, |l| !Arc::ptr_eq(l, &f)) {
                        let bytes = part(&f);
                        tokio::time::sleep(STREAM_INTERVAL).await;
                        return Some((Ok::<_, std::io::Error>(bytes), Some(f)));
                    }
                }
                tokio::time::sleep(STREAM_INTERVAL).await;
            }
        }
    });
    (
        [(header::CONTENT_TYPE, format!("multipart/x-mixed-replace; boundary={BOUNDARY}"))],
        Body::from_stream(frames),
    )
        .into_response()
}

pub fn router(hub: Arc<TelemetryHub>) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route("/status", get(status))
        .route("/frame", get(frame))
        .route("/stream", get(stream))
        .fallback(|| async { (StatusCode::NOT_FOUND, "not found") })
        .with_state(hub)
}

/// The HTTP server on its own runtime thread. Dropping it shuts it down.
#[derive(Debug)]
pub struct VizServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl VizServer {
    pub fn start(addr: SocketAddr, hub: Arc<TelemetryHub>) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let (tx, rx) = oneshot::channel();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        eprintln!("viz server: {e}");
                        return;
                    }
                };
                let served = axum::serve(listener, router(hub)).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = served.await {
                    eprintln!("viz server: {e}");
                }
            });
            // open /stream responses never finish on their own
            rt.shutdown_timeout(Duration::from_millis(100));
        });
        Ok(Self { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for VizServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}
