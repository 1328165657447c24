//! RemoteBackend against a minimal in-process HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use metarank::encoder::stub::stub_pair_score;
use metarank::encoder::{stub_embed, EncoderError, RemoteBackend};
use metarank::{BackendConfig, BiEncoder, CrossEncoder};
use serde_json::{json, Value};

#[derive(Clone, Copy)]
enum Mode {
    /// Mirrors the stub backend.
    Stub,
    /// Reports the wrong dimension.
    WrongDim,
    /// Returns HTTP 500.
    Fail,
    /// Drops one score.
    Short,
}

struct Mock {
    url: String,
    requests: Arc<AtomicUsize>,
}

fn mock(mode: Mode, dim: usize) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let counter = counter.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut len = 0;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    if h.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let req: Value = serde_json::from_slice(&body).unwrap();
                let (status, resp) = respond(mode, dim, &path, &req);
                let text = resp.to_string();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                    text.len()
                )
                .unwrap();
            });
        }
    });
    Mock { url, requests }
}

fn respond(mode: Mode, dim: usize, path: &str, req: &Value) -> (u16, Value) {
    if let Mode::Fail = mode {
        return (500, json!({"error": "boom"}));
    }
    let texts: Vec<&str> = req["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_str().unwrap())
        .collect();
    match path {
        "/embed" => {
            let vectors: Vec<Vec<f32>> = texts
                .iter()
                .map(|t| stub_embed::<f32>(t, dim).values)
                .collect();
            let d = if let Mode::WrongDim = mode {
                dim + 1
            } else {
                dim
            };
            (200, json!({"dim": d, "vectors": vectors}))
        }
        "/score" => {
            let q = req["query"].as_str().unwrap();
            let mut scores: Vec<f32> = texts.iter().map(|t| stub_pair_score(q, t, dim)).collect();
            if let Mode::Short = mode {
                scores.pop();
            }
            (200, json!({"scores": scores}))
        }
        _ => (404, json!({})),
    }
}

fn backend(url: &str, dim: usize, max_batch: usize) -> RemoteBackend {
    let mut cfg = BackendConfig::remote(url, dim);
    cfg.max_batch = max_batch;
    cfg.timeout_ms = 5_000;
    RemoteBackend::new(&cfg).unwrap()
}

#[test]
fn remote_matches_stub_and_chunks_requests() {
    let m = mock(Mode::Stub, 16);
    let b = backend(&m.url, 16, 3);
    let texts = [
        "alpha",
        "beta gamma",
        "delta",
        "epsilon",
        "zeta",
        "eta",
        "theta",
    ];
    let got = b.embed(&texts).unwrap();
    assert_eq!(got.len(), 7);
    for (t, v) in texts.iter().zip(&got) {
        assert_eq!(v.values, stub_embed::<f32>(t, 16).values);
    }
    assert_eq!(m.requests.load(Ordering::SeqCst), 3);
    let scores = b.score_pairs("beta", &texts).unwrap();
    for (t, s) in texts.iter().zip(&scores) {
        assert_eq!(s.score, stub_pair_score("beta", t, 16));
    }
    assert_eq!(m.requests.load(Ordering::SeqCst), 6);
}

#[test]
fn remote_failures_are_typed() {
    let wrong = mock(Mode::WrongDim, 16);
    assert!(matches!(
        backend(&wrong.url, 16, 8).embed(&["x"]),
        Err(EncoderError::DimensionMismatch {
            expected: 16,
            got: 17
        })
    ));
    let fail = mock(Mode::Fail, 16);
    assert!(matches!(
        backend(&fail.url, 16, 8).embed(&["x"]),
        Err(EncoderError::BackendUnavailable(_))
    ));
    assert!(matches!(
        backend(&fail.url, 16, 8).score_pairs("q", &["x"]),
        Err(EncoderError::BackendUnavailable(_))
    ));
    let short = mock(Mode::Short, 16);
    assert!(matches!(
        backend(&short.url, 16, 8).score_pairs("q", &["x", "y"]),
        Err(EncoderError::MalformedResponse(_))
    ));
    assert!(matches!(
        backend(&short.url, 16, 8).embed(&[]),
        Err(EncoderError::EmptyInput)
    ));
}
