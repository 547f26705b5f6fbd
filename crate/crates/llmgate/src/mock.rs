//! A local chat-completion endpoint with scripted replies and
//! deterministic failure injection.

use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::generate::sha256_hex;

/// Maps the user message to the reply text.
pub type Responder = Arc<dyn Fn(&str) -> String + Send + Sync>;

#[derive(Debug, Clone, Copy, Default)]
pub struct MockOptions {
    /// Percentage of attempts answered with HTTP 500, decided by a hash of
    /// (seed, prompt, attempt number), so reruns fail identically.
    pub failure_percent: u32,
    pub seed: u64,
}

#[derive(Default)]
struct Stats {
    requests: AtomicUsize,
    injected: AtomicUsize,
    attempts: Mutex<HashMap<String, u32>>,
}

#[derive(Clone)]
struct AppState {
    responder: Responder,
    options: MockOptions,
    stats: Arc<Stats>,
}

pub struct MockServer {
    addr: SocketAddr,
    stats: Arc<Stats>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

fn injected_failure(options: &MockOptions, prompt: &str, attempt: u32) -> bool {
    if options.failure_percent == 0 {
        return false;
    }
    let h = sha256_hex(&format!("{}|{attempt}|{prompt}", options.seed));
    let v = u64::from_str_radix(&h[..16], 16).expect("hex digest");
    v % 100 < u64::from(options.failure_percent)
}

async fn completions(State(state): State<AppState>, Json(body): Json<Value>) -> Response {
    state.stats.requests.fetch_add(1, Ordering::Relaxed);
    let Some(prompt) = body.pointer("/messages/0/content").and_then(Value::as_str) else {
        return (StatusCode::BAD_REQUEST, "missing messages[0].content").into_response();
    };
    let attempt = {
        let mut map = state.stats.attempts.lock().expect("stats lock");
        let n = map.entry(prompt.to_string()).or_insert(0);
        *n += 1;
        *n
    };
    if injected_failure(&state.options, prompt, attempt) {
        state.stats.injected.fetch_add(1, Ordering::Relaxed);
        return (StatusCode::INTERNAL_SERVER_ERROR, "injected failure").into_response();
    }
    let reply = (state.responder)(prompt);
    Json(json!({
        "object": "chat.completion",
        "model": body.get("model").cloned().unwrap_or(Value::Null),
        "choices": [{"index": 0, "message": {"role": "assistant", "content": reply}, "finish_reason": "stop"}],
    }))
    .into_response()
}

impl MockServer {
    /// Binds an ephemeral localhost port and serves until dropped.
    pub fn start(responder: Responder, options: MockOptions) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stats = Arc::new(Stats::default());
        let state = AppState {
            responder,
            options,
            stats: stats.clone(),
        };
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(state);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        rx.await.ok();
                    })
                    .await
                    .expect("mock server");
            });
        });
        Ok(MockServer {
            addr,
            stats,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    /// Always replies with `text`.
    pub fn constant(text: &str, options: MockOptions) -> std::io::Result<Self> {
        let text = text.to_string();
        Self::start(Arc::new(move |_| text.clone()), options)
    }

    /// Base URL to put in an endpoint config.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.stats.requests.load(Ordering::Relaxed)
    }

    pub fn injected_failures(&self) -> usize {
        self.stats.injected.load(Ordering::Relaxed)
    }

    /// Largest number of requests seen for any single prompt.
    pub fn max_attempts_per_prompt(&self) -> u32 {
        self.stats.attempts.lock().expect("stats lock").values().copied().max().unwrap_or(0)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
