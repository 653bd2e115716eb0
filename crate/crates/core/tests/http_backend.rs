use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use ccotom::backend::{Backend, BackendError, BackendRequest, HttpBackend, RetryPolicy};

/// Reads one HTTP request and returns its body.
fn read_request(stream: &mut TcpStream) -> String {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        if line == "\r\n" || line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    String::from_utf8(body).unwrap()
}

/// Serves each connection with `reply(n)` where n counts requests from 0.
fn serve(reply: impl Fn(usize, &str) -> (u16, String) + Send + 'static) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let count = Arc::new(AtomicUsize::new(0));
    let seen = count.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let body = read_request(&mut stream);
            let n = seen.fetch_add(1, Ordering::SeqCst);
            let (status, text) = reply(n, &body);
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (url, count)
}

fn quick_retry(max_retries: u32) -> RetryPolicy {
    RetryPolicy { max_retries, base_delay_ms: 1, max_delay_ms: 5 }
}

fn request() -> BackendRequest {
    BackendRequest::greedy("m", "hello", 16)
}

#[test]
fn server_error_surfaces_as_provider_error_after_retries() {
    let (url, count) = serve(|_, _| (500, "{\"error\":\"boom\"}".into()));
    let backend = HttpBackend::new(url, None, Duration::from_secs(5), quick_retry(2));
    match backend.complete(&request()) {
        Err(BackendError::ProviderError { status, body }) => {
            assert_eq!(status, 500);
            assert!(body.contains("boom"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(count.load(Ordering::SeqCst), 3);
    assert_eq!(backend.provider_calls(), 3);
}

#[test]
fn client_error_is_not_retried() {
    let (url, count) = serve(|_, _| (400, "bad".into()));
    let backend = HttpBackend::new(url, None, Duration::from_secs(5), quick_retry(3));
    assert!(matches!(backend.complete(&request()), Err(BackendError::ProviderError { status: 400, .. })));
    assert_eq!(count.load(Ordering::SeqCst), 1);
}

#[test]
fn retries_then_succeeds_and_sends_greedy_body() {
    let (url, _) = serve(|n, body| {
        if n == 0 {
            return (429, "slow down".into());
        }
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(v["temperature"], 0.0);
        assert_eq!(v["max_tokens"], 16);
        assert_eq!(v["messages"][0]["role"], "user");
        assert_eq!(v["messages"][0]["content"], "hello");
        (
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"Answer: (a)"}}],"usage":{"prompt_tokens":3,"completion_tokens":2}}"#
                .into(),
        )
    });
    let backend = HttpBackend::new(url, Some("k".into()), Duration::from_secs(5), quick_retry(2));
    let r = backend.complete(&request()).unwrap();
    assert_eq!(r.text, "Answer: (a)");
    assert_eq!(r.usage.unwrap().completion_tokens, 2);
}

#[test]
fn malformed_body() {
    let (url, _) = serve(|_, _| (200, "not json".into()));
    let backend = HttpBackend::new(url, None, Duration::from_secs(5), quick_retry(0));
    assert!(matches!(backend.complete(&request()), Err(BackendError::MalformedResponse(_))));
}

#[test]
fn closed_port_is_a_connectivity_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = HttpBackend::new(format!("http://127.0.0.1:{port}/"), None, Duration::from_secs(2), quick_retry(1));
    let err = backend.complete(&request()).unwrap_err();
    assert!(err.is_connectivity(), "{err:?}");
}
