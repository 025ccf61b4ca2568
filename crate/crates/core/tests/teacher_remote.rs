use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use clkd_core::error::Error;
use clkd_core::teacher::{PairText, RemoteConfig, RemoteTeacher, TeacherScorer};

/// How the mock answers each request.
#[derive(Clone, Copy)]
enum Mode {
    /// `{"scores":[{"id", "z":[0,1]}]}` for every pair
    Echo,
    ServerError,
    WrongCount,
}

struct Mock {
    url: String,
    requests: Arc<AtomicUsize>,
    max_seen: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    String::from_utf8(body).ok()
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

fn spawn_mock(mode: Mode) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/score", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let max_seen = Arc::new(AtomicUsize::new(0));
    let (r, m) = (requests.clone(), max_seen.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (r, m) = (r.clone(), m.clone());
            thread::spawn(move || {
                let Some(body) = read_request(&mut stream) else { return };
                r.fetch_add(1, Ordering::SeqCst);
                let req: serde_json::Value = serde_json::from_str(&body).unwrap();
                let pairs = req["pairs"].as_array().unwrap();
                m.fetch_max(pairs.len(), Ordering::SeqCst);
                let scores: Vec<serde_json::Value> = pairs
                    .iter()
                    .map(|p| serde_json::json!({"id": p["id"], "z": [0.0, 1.0]}))
                    .collect();
                match mode {
                    Mode::Echo => respond(
                        &mut stream,
                        "200 OK",
                        &serde_json::json!({ "scores": scores }).to_string(),
                    ),
                    Mode::ServerError => respond(&mut stream, "500 Internal Server Error", "{}"),
                    Mode::WrongCount => respond(
                        &mut stream,
                        "200 OK",
                        &serde_json::json!({ "scores": &scores[..scores.len() - 1] }).to_string(),
                    ),
                }
            });
        }
    });
    Mock {
        url,
        requests,
        max_seen,
    }
}

fn config(url: &str) -> RemoteConfig {
    RemoteConfig {
        endpoint: url.to_string(),
        backoff_ms: 1,
        timeout_ms: 5_000,
        ..RemoteConfig::default()
    }
}

fn pairs(n: usize) -> Vec<PairText> {
    (0..n)
        .map(|i| PairText {
            id: format!("q{}::c{}", i / 8, i % 8),
            question: "what is it".into(),
            sentence: format!("sentence {i}"),
        })
        .collect()
}

#[test]
fn echo_endpoint_gives_softmax_of_zero_one() {
    let mock = spawn_mock(Mode::Echo);
    let teacher = RemoteTeacher::new(config(&mock.url)).unwrap();
    let batch = pairs(5);
    let scores = teacher.score_remote(&batch).unwrap();
    assert_eq!(scores.len(), 5);
    for (s, p) in scores.iter().zip(&batch) {
        assert_eq!(s.pair_id, p.id);
        assert!((s.prob_pos - 0.7311).abs() < 1e-4);
    }
    assert_eq!(teacher.cache().len(), 5);
}

#[test]
fn empty_batch_sends_nothing() {
    let mock = spawn_mock(Mode::Echo);
    let teacher = RemoteTeacher::new(config(&mock.url)).unwrap();
    assert!(teacher.score_remote(&[]).unwrap().is_empty());
    assert_eq!(mock.requests.load(Ordering::SeqCst), 0);
}

#[test]
fn oversized_batch_is_rejected() {
    let mock = spawn_mock(Mode::Echo);
    let teacher = RemoteTeacher::new(config(&mock.url)).unwrap();
    assert!(matches!(teacher.score_remote(&pairs(257)), Err(Error::InvalidInput(_))));
}

#[test]
fn large_requests_are_split_and_cached() {
    let mock = spawn_mock(Mode::Echo);
    let teacher = RemoteTeacher::new(RemoteConfig {
        max_batch: 16,
        ..config(&mock.url)
    })
    .unwrap();
    let all = pairs(100);
    let scores = teacher.score_pairs(&all).unwrap();
    let ids: Vec<&str> = scores.iter().map(|s| s.pair_id.as_str()).collect();
    let expected: Vec<&str> = all.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids, expected);
    assert_eq!(mock.requests.load(Ordering::SeqCst), 7);
    assert!(mock.max_seen.load(Ordering::SeqCst) <= 16);

    teacher.score_pairs(&all).unwrap();
    assert_eq!(mock.requests.load(Ordering::SeqCst), 7);
}

#[test]
fn server_errors_are_retried_three_times() {
    let mock = spawn_mock(Mode::ServerError);
    let teacher = RemoteTeacher::new(config(&mock.url)).unwrap();
    let err = teacher.score_remote(&pairs(2)).unwrap_err();
    assert!(matches!(err, Error::Remote(_)), "{err}");
    assert_eq!(mock.requests.load(Ordering::SeqCst), 4);
}

#[test]
fn unreachable_endpoint_fails_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let teacher = RemoteTeacher::new(config(&format!("http://127.0.0.1:{port}/score"))).unwrap();
    let err = teacher.score_remote(&pairs(1)).unwrap_err();
    assert!(matches!(err, Error::Remote(_)));
    assert!(err.to_string().contains("after 3 retries"), "{err}");
}

#[test]
fn malformed_response_is_not_retried() {
    let mock = spawn_mock(Mode::WrongCount);
    let teacher = RemoteTeacher::new(config(&mock.url)).unwrap();
    let err = teacher.score_remote(&pairs(3)).unwrap_err();
    assert!(err.to_string().contains("malformed"), "{err}");
    assert_eq!(mock.requests.load(Ordering::SeqCst), 1);
}
