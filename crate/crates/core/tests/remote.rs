#![cfg(feature = "remote")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use codeaug::augmentor::{complete, ChatRequest, RemoteClient, RetryPolicy};
use codeaug::Error;

/// Serves one canned response per connection, in order, and counts
/// requests. Returns the base URL.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; len];
            reader.read_exact(&mut payload).ok();
            counter.fetch_add(1, Ordering::SeqCst);
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            stream.write_all(reply.as_bytes()).ok();
        }
    });
    (format!("http://{addr}"), hits)
}

fn fast(client: RemoteClient) -> RemoteClient {
    client
        .with_retry(RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(5),
        })
        .with_rate_limit(1000.0, 10.0)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 5}
    })
    .to_string()
}

fn request() -> ChatRequest {
    ChatRequest::user("gpt-3.5-turbo-0301", "Original Query: sort a list")
}

#[test]
fn two_server_errors_then_success_takes_three_attempts() {
    let (url, hits) = serve(vec![
        (500, "{}".into()),
        (503, "{}".into()),
        (200, ok_body("1. order a list")),
    ]);
    let client = fast(RemoteClient::new(url, "key"));
    let resp = complete(&client, &request()).unwrap();
    assert_eq!(resp.content, "1. order a list");
    assert_eq!(resp.usage.unwrap().completion_tokens, 5);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn rejected_key_is_a_credential_error_without_retries() {
    let (url, hits) = serve(vec![(401, r#"{"error":"bad key"}"#.into()), (200, ok_body("x"))]);
    let client = fast(RemoteClient::new(url, "wrong"));
    assert!(matches!(complete(&client, &request()), Err(Error::Credential(_))));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn retries_are_bounded() {
    let (url, hits) = serve(vec![(500, "{}".into()); 6]);
    let client = fast(RemoteClient::new(url, "key"));
    assert!(matches!(complete(&client, &request()), Err(Error::Transport(_))));
    assert_eq!(hits.load(Ordering::SeqCst), 5);
}

#[test]
fn blank_completion_is_an_empty_response() {
    let (url, _) = serve(vec![(200, ok_body("   "))]);
    let client = fast(RemoteClient::new(url, "key"));
    assert!(matches!(complete(&client, &request()), Err(Error::EmptyResponse(_))));
}
