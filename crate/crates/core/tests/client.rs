use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use hypergen::requirement::{summarize, ChatClient, ChatMessage, HttpChatClient, PromptText, RequirementSource};
use hypergen::Error;

struct Seen {
    request_line: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves each canned `(status, body)` to one connection, in order, and
/// returns what the client sent.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<Seen>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut authorization = None;
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "authorization" => authorization = Some(v.trim().to_string()),
                    "content-length" => length = v.trim().parse().unwrap(),
                    _ => {}
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            seen.push(Seen {
                request_line: request_line.trim_end().to_string(),
                authorization,
                body: serde_json::from_slice(&buf).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (url, handle)
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn posts_chat_request_and_reads_answer() {
    let (url, server) = serve(vec![(
        200,
        completion("The rows are flower measurements.\nThis is a tabular classification into 3 classes task on iris flowers."),
    )]);
    let client = HttpChatClient::new(&url, "test-model", "secret-token", Duration::from_secs(5));
    let req = summarize(&PromptText("describe the data".into()), &client).unwrap();
    assert_eq!(
        req.sentence(),
        "This is a tabular classification into 3 classes task on iris flowers."
    );
    assert_eq!(req.source(), RequirementSource::Llm);

    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 1);
    assert!(seen[0].request_line.starts_with("POST /v1/chat/completions "));
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer secret-token"));
    assert_eq!(
        seen[0].body,
        serde_json::json!({"model": "test-model", "messages": [{"role": "user", "content": "describe the data"}]})
    );
}

#[test]
fn http_error_is_not_retried() {
    let (url, server) = serve(vec![(500, "{\"error\":\"boom\"}".into())]);
    let client = HttpChatClient::new(&url, "m", "t", Duration::from_secs(5));
    let err = client.complete(&[ChatMessage::user("x")]).unwrap_err();
    assert!(matches!(err, Error::Client(ref m) if m.contains("500")), "{err}");
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn malformed_and_empty_answers_are_errors() {
    let (url, server) = serve(vec![(200, "{\"choices\":[]}".into()), (200, completion("   "))]);
    let client = HttpChatClient::new(&url, "m", "t", Duration::from_secs(5));
    assert!(matches!(client.complete(&[ChatMessage::user("x")]), Err(Error::Client(_))));
    assert!(matches!(
        summarize(&PromptText("x".into()), &client),
        Err(Error::DegenerateResponse)
    ));
    server.join().unwrap();
}

#[test]
fn unreachable_endpoint_fails_after_retry() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let client = HttpChatClient::new(&format!("http://127.0.0.1:{port}/v1"), "m", "t", Duration::from_secs(2));
    match client.complete(&[ChatMessage::user("x")]) {
        Err(Error::Client(m)) => assert!(m.contains("twice"), "{m}"),
        other => panic!("unexpected {other:?}"),
    }
}
