//! A minimal in-process HTTP scorer for tests: one thread, real TCP, no
//! framework. Scores and embeddings are computed with the same mock functions
//! the library exposes, so the service path must agree with the mock path
//! byte for byte. A scripted failure plan injects transient errors.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use bitrepair::scoring::{mock_embedding, mock_qe_score};

/// What the stub does with one incoming request. Requests beyond the plan
/// are served normally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Serve,
    Reject503,
    Reject429,
    DropConnection,
}

pub struct StubScorer {
    addr: std::net::SocketAddr,
    requests: Arc<AtomicUsize>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubScorer {
    /// Start a stub that serves every request.
    pub fn serve(dimension: usize, seed: u64) -> StubScorer {
        StubScorer::with_plan(dimension, seed, &[])
    }

    /// Start a stub that follows `plan` for its first requests.
    pub fn with_plan(dimension: usize, seed: u64, plan: &[Behavior]) -> StubScorer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub scorer");
        let addr = listener.local_addr().unwrap();
        let plan = Arc::new(Mutex::new(plan.iter().copied().collect::<VecDeque<_>>()));
        let requests = Arc::new(AtomicUsize::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));
        let handle = {
            let plan = Arc::clone(&plan);
            let requests = Arc::clone(&requests);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    requests.fetch_add(1, Ordering::SeqCst);
                    let behavior = plan.lock().unwrap().pop_front().unwrap_or(Behavior::Serve);
                    handle_connection(stream, behavior, dimension, seed);
                }
            })
        };
        StubScorer {
            addr,
            requests,
            shutdown,
            handle: Some(handle),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubScorer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Wake the accept loop so the thread can observe the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, behavior: Behavior, dimension: usize, seed: u64) {
    match behavior {
        Behavior::DropConnection => return,
        Behavior::Reject503 => {
            let _ = read_request(&mut stream);
            let _ = stream.write_all(
                b"HTTP/1.1 503 Service Unavailable\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
            );
            return;
        }
        Behavior::Reject429 => {
            let _ = read_request(&mut stream);
            let _ = stream.write_all(
                b"HTTP/1.1 429 Too Many Requests\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
            );
            return;
        }
        Behavior::Serve => {}
    }
    let Some((path, body)) = read_request(&mut stream) else {
        return;
    };
    if path != "/v1/score" {
        let _ = stream.write_all(
            b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
        );
        return;
    }
    let request: serde_json::Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(_) => {
            let _ = stream.write_all(
                b"HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
            );
            return;
        }
    };
    let kind = request["kind"].as_str().unwrap_or_default();
    let pairs = request["pairs"].as_array().cloned().unwrap_or_default();
    let reply = match kind {
        "qe" => {
            let scores: Vec<serde_json::Value> = pairs
                .iter()
                .map(|p| {
                    let id = p["id"].as_u64().unwrap();
                    let score = mock_qe_score(
                        p["source"].as_str().unwrap_or_default(),
                        p["target"].as_str().unwrap_or_default(),
                    );
                    serde_json::json!({"id": id, "score": score})
                })
                .collect();
            serde_json::json!({ "scores": scores })
        }
        "embedding" => {
            let embeddings: Vec<serde_json::Value> = pairs
                .iter()
                .map(|p| {
                    let id = p["id"].as_u64().unwrap();
                    let source_vec =
                        mock_embedding(p["source"].as_str().unwrap_or_default(), dimension, seed)
                            .unwrap();
                    let target_vec =
                        mock_embedding(p["target"].as_str().unwrap_or_default(), dimension, seed)
                            .unwrap();
                    serde_json::json!({"id": id, "source_vec": source_vec, "target_vec": target_vec})
                })
                .collect();
            serde_json::json!({ "embeddings": embeddings })
        }
        _ => {
            let _ = stream.write_all(
                b"HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
            );
            return;
        }
    };
    let body = serde_json::to_vec(&reply).unwrap();
    let header = format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    let _ = stream.write_all(header.as_bytes());
    let _ = stream.write_all(&body);
}

/// Read one HTTP request, returning its path and body.
fn read_request(stream: &mut TcpStream) -> Option<(String, Vec<u8>)> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        if let Some(pos) = find_header_end(&buf) {
            break pos;
        }
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let header_text = String::from_utf8_lossy(&buf[..header_end]).into_owned();
    let mut lines = header_text.split("\r\n");
    let request_line = lines.next()?;
    let path = request_line.split(' ').nth(1)?.to_string();
    let content_length: usize = lines
        .filter_map(|line| line.split_once(':'))
        .find(|(name, _)| name.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, value)| value.trim().parse().ok())
        .unwrap_or(0);
    let mut body = buf[header_end + 4..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    body.truncate(content_length);
    Some((path, body))
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}
