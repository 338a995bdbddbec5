use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use msek::synthesize::{Engine, EngineConfig, EngineError, EngineKind, HttpChat, Message, Prompt};

struct Captured {
    head: String,
    body: serde_json::Value,
}

enum Reply {
    Json(u16, String),
    Stall(Duration),
}

/// Accepts one connection per scripted reply, each answered on its own
/// thread, and returns the requests received.
fn stub(replies: Vec<Reply>) -> (String, thread::JoinHandle<Vec<Captured>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let handle = thread::spawn(move || {
        let workers: Vec<_> = replies
            .into_iter()
            .map(|reply| {
                let (stream, _) = listener.accept().unwrap();
                thread::spawn(move || answer(stream, reply))
            })
            .collect();
        workers.into_iter().map(|w| w.join().unwrap()).collect()
    });
    (url, handle)
}

fn answer(stream: TcpStream, reply: Reply) -> Captured {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut head = String::new();
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
        head.push_str(&line);
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    let mut out = stream;
    match reply {
        Reply::Json(status, text) => {
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = out.write_all(resp.as_bytes());
        }
        Reply::Stall(d) => thread::sleep(d),
    }
    Captured {
        head,
        body: serde_json::from_slice(&body).unwrap(),
    }
}

fn completion(content: &str) -> Reply {
    Reply::Json(
        200,
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
            .to_string(),
    )
}

fn engine(url: &str, timeout_s: f64) -> HttpChat {
    let cfg = EngineConfig {
        endpoint: url.to_string(),
        model: "test-model".into(),
        timeout_s,
        backoff_s: 0.01,
        max_retries: 2,
        ..EngineConfig::of_kind(EngineKind::HttpChat)
    };
    HttpChat::with_api_key(cfg, Some("sk-test".into())).unwrap()
}

fn prompt() -> Prompt {
    Prompt {
        messages: vec![
            Message::system("You manage servers."),
            Message::user("Status:\ndimmer: 0.8"),
        ],
        token_estimate: 10,
        history_included: 0,
    }
}

#[test]
fn posts_chat_request_and_returns_content() {
    let (url, handle) = stub(vec![completion("1 0.6")]);
    let mut e = engine(&url, 5.0);
    assert_eq!(e.invoke(&prompt()).unwrap(), "1 0.6");
    assert_eq!(e.kind(), EngineKind::HttpChat);
    let seen = handle.join().unwrap();
    assert_eq!(seen.len(), 1);
    let req = &seen[0];
    assert!(req.head.starts_with("POST /v1/chat/completions HTTP/1.1"));
    assert!(req
        .head
        .to_ascii_lowercase()
        .contains("authorization: bearer sk-test"));
    assert_eq!(req.body["model"], "test-model");
    assert_eq!(req.body["temperature"], 0.0);
    assert_eq!(req.body["messages"][0]["role"], "system");
    assert_eq!(req.body["messages"][1]["content"], "Status:\ndimmer: 0.8");
}

#[test]
fn http_status_errors_are_not_retried() {
    let (url, handle) = stub(vec![Reply::Json(500, "{}".into())]);
    let mut e = engine(&url, 5.0);
    assert!(matches!(
        e.invoke(&prompt()),
        Err(EngineError::EngineHttpError(500))
    ));
    assert_eq!(handle.join().unwrap().len(), 1);
}

#[test]
fn timeouts_are_retried_with_backoff() {
    let (url, handle) = stub(vec![
        Reply::Stall(Duration::from_millis(800)),
        completion("2"),
    ]);
    let mut e = engine(&url, 0.3);
    assert_eq!(e.invoke(&prompt()).unwrap(), "2");
    assert_eq!(handle.join().unwrap().len(), 2);
}

#[test]
fn gives_up_after_max_retries() {
    let stall = || Reply::Stall(Duration::from_millis(600));
    let (url, handle) = stub(vec![stall(), stall(), stall()]);
    let mut e = engine(&url, 0.2);
    assert!(matches!(
        e.invoke(&prompt()),
        Err(EngineError::EngineTimeout)
    ));
    assert_eq!(handle.join().unwrap().len(), 3);
}

#[test]
fn malformed_body_is_a_bad_response() {
    let (url, handle) = stub(vec![Reply::Json(200, r#"{"choices": []}"#.into())]);
    let mut e = engine(&url, 5.0);
    assert!(matches!(
        e.invoke(&prompt()),
        Err(EngineError::BadResponse(_))
    ));
    handle.join().unwrap();
}
