use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use faithtrace_conceptgen::{
    generate_bank, ChatBackend, ChatRequest, GenConfig, GenError, HttpChatClient, HttpConfig, PromptMode,
};

struct Captured {
    bodies: Vec<String>,
    auth: Vec<Option<String>>,
}

/// Serves one canned `(status, body)` per connection, then closes.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Captured>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let captured = Arc::new(Mutex::new(Captured {
        bodies: Vec::new(),
        auth: Vec::new(),
    }));
    let sink = Arc::clone(&captured);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = match listener.accept() {
                Ok(s) => s,
                Err(_) => return,
            };
            let mut reader = BufReader::new(stream);
            let mut content_length = 0usize;
            let mut auth = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut buf = vec![0u8; content_length];
            reader.read_exact(&mut buf).unwrap();
            {
                let mut c = sink.lock().unwrap();
                c.bodies.push(String::from_utf8(buf).unwrap());
                c.auth.push(auth);
            }
            let mut stream = reader.into_inner();
            let reason = if status == 200 { "OK" } else { "ERR" };
            write!(
                stream,
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
    });
    (format!("http://{addr}"), captured)
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn client(url: &str, max_retries: u32) -> HttpChatClient {
    HttpChatClient::new(HttpConfig {
        endpoint_url: url.to_string(),
        api_key: Some("sk-test".into()),
        model_name: "test-model".into(),
        max_retries,
        timeout: Duration::from_secs(5),
        backoff_base: Duration::from_millis(1),
    })
    .unwrap()
}

fn request() -> ChatRequest {
    ChatRequest {
        mode: PromptMode::Llm,
        prompt: "hello".into(),
        image: None,
    }
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, captured) = serve(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, completion("- long tail\n- gray fur\n")),
    ]);
    let mut c = client(&url, 3);
    let text = c.complete(&request()).unwrap();
    assert_eq!(text, "- long tail\n- gray fur\n");
    assert_eq!(c.requests_sent(), 3);
    let captured = captured.lock().unwrap();
    let body: serde_json::Value = serde_json::from_str(&captured.bodies[2]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["content"], "hello");
    assert_eq!(captured.auth[0].as_deref(), Some("Bearer sk-test"));
}

#[test]
fn gives_up_after_bounded_retries() {
    let (url, _) = serve(vec![(503, "{}".into()); 3]);
    let mut c = client(&url, 2);
    match c.complete(&request()) {
        Err(GenError::Http { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected Http error, got {other:?}"),
    }
    assert_eq!(c.requests_sent(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, _) = serve(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let mut c = client(&url, 5);
    match c.complete(&request()) {
        Err(GenError::Http { attempts, message }) => {
            assert_eq!(attempts, 1);
            assert!(message.contains("401"));
        }
        other => panic!("expected Http error, got {other:?}"),
    }
    assert_eq!(c.requests_sent(), 1);
}

#[test]
fn generates_over_http_with_request_bound() {
    let (url, _) = serve(vec![
        (500, "{}".into()),
        (200, completion("- long tail\n- Long Tail\n- lemur ears\n- gray fur")),
        (200, completion("- trees")),
    ]);
    let max_retries = 2;
    let mut c = client(&url, max_retries);
    let cfg = GenConfig {
        llm_target_count: 2,
        vlm_target_count: 1,
        ..Default::default()
    };
    let bank = generate_bank(&cfg, &mut c, "lemur", None).unwrap();
    assert_eq!(bank.texts(), vec!["long tail", "gray fur", "trees"]);
    assert_eq!(bank.requests, 3);
    assert!(bank.requests <= bank.rounds * (1 + max_retries as usize));
}
